#include "kinswarm/state.hpp"

#include "kinswarm/error.hpp"

#include <cmath>
#include <string>

namespace kinswarm {

namespace {

void check_shape(std::size_t dim, std::size_t count, const std::vector<double>& values, const char* what)
{
    if (values.size() != count * dim)
        throw Error(ErrorKind::InvalidState, std::string(what) + " array has " + std::to_string(values.size()) +
                                                 " entries, expected " + std::to_string(count * dim));
    for (double v : values)
        if (!std::isfinite(v))
            throw Error(ErrorKind::InvalidState, std::string(what) + " contain a non-finite value");
}

} // namespace

SpeciesEnsemble::SpeciesEnsemble(std::size_t dim, std::vector<double> positions, std::vector<double> weights,
                                 std::optional<std::vector<double>> velocities)
    : dim_(dim), positions_(std::move(positions)), velocities_(std::move(velocities)), weights_(std::move(weights))
{
    if (dim_ == 0)
        throw Error(ErrorKind::InvalidState, "dimension must be at least 1");
    if (weights_.empty())
        throw Error(ErrorKind::InvalidState, "species must hold at least one particle");
    check_shape(dim_, weights_.size(), positions_, "positions");
    if (velocities_)
        check_shape(dim_, weights_.size(), *velocities_, "velocities");
    double sum = 0.0;
    for (double w : weights_) {
        if (!(w > 0.0) || !std::isfinite(w))
            throw Error(ErrorKind::InvalidState, "weights must be positive and finite");
        sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightSumTolerance)
        throw Error(ErrorKind::InvalidState, "weights sum to " + std::to_string(sum) + ", expected 1");
}

SpeciesEnsemble SpeciesEnsemble::with_equal_weights(std::size_t dim, std::vector<double> positions,
                                                    std::optional<std::vector<double>> velocities)
{
    std::size_t count = dim ? positions.size() / dim : 0;
    std::vector<double> weights(count, count ? 1.0 / static_cast<double>(count) : 0.0);
    return SpeciesEnsemble(dim, std::move(positions), std::move(weights), std::move(velocities));
}

SpeciesEnsemble SpeciesEnsemble::with_coordinates(std::vector<double> positions,
                                                  std::optional<std::vector<double>> velocities) const
{
    SpeciesEnsemble out = *this;
    check_shape(dim_, size(), positions, "positions");
    if (velocities)
        check_shape(dim_, size(), *velocities, "velocities");
    out.positions_ = std::move(positions);
    out.velocities_ = std::move(velocities);
    return out;
}

SpeciesEnsemble SpeciesEnsemble::without_velocities() const
{
    SpeciesEnsemble out = *this;
    out.velocities_.reset();
    return out;
}

MultiSpeciesState::MultiSpeciesState(double time, std::vector<SpeciesEnsemble> species)
    : time_(time), species_(std::move(species))
{
    if (!std::isfinite(time_))
        throw Error(ErrorKind::InvalidState, "time must be finite");
    for (const auto& s : species_) {
        if (s.dim() != species_.front().dim())
            throw Error(ErrorKind::InvalidState, "species disagree on dimension");
        if (s.has_velocities() != species_.front().has_velocities())
            throw Error(ErrorKind::InvalidState, "velocities must be present for all species or none");
    }
}

std::size_t MultiSpeciesState::total_particles() const noexcept
{
    std::size_t n = 0;
    for (const auto& s : species_)
        n += s.size();
    return n;
}

MultiSpeciesState MultiSpeciesState::positions_only() const
{
    std::vector<SpeciesEnsemble> out;
    out.reserve(species_.size());
    for (const auto& s : species_)
        out.push_back(s.without_velocities());
    return MultiSpeciesState(time_, std::move(out));
}

} // namespace kinswarm
