// Particle containers shared by the kernel, ensemble, and kinetic modules.

#ifndef KINSWARM_STATE_HPP
#define KINSWARM_STATE_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace kinswarm {

/// Tolerance on the unit-mass normalization of weights.
inline constexpr double kWeightSumTolerance = 1e-12;

/// Weighted particles of one species: positions (M x d, row-major),
/// optional velocities of the same shape, and positive weights summing to one.
class SpeciesEnsemble
{
public:
    SpeciesEnsemble() = default;
    SpeciesEnsemble(std::size_t dim, std::vector<double> positions, std::vector<double> weights,
                    std::optional<std::vector<double>> velocities = std::nullopt);

    static SpeciesEnsemble with_equal_weights(std::size_t dim, std::vector<double> positions,
                                              std::optional<std::vector<double>> velocities = std::nullopt);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return weights_.size(); }
    bool has_velocities() const noexcept { return velocities_.has_value(); }

    std::span<const double> position(std::size_t k) const { return {positions_.data() + k * dim_, dim_}; }
    std::span<const double> velocity(std::size_t k) const { return {velocities_->data() + k * dim_, dim_}; }
    double weight(std::size_t k) const { return weights_[k]; }

    const std::vector<double>& positions() const noexcept { return positions_; }
    const std::optional<std::vector<double>>& velocities() const noexcept { return velocities_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

    /// Same weights, new coordinates; the new arrays are validated for shape.
    SpeciesEnsemble with_coordinates(std::vector<double> positions,
                                     std::optional<std::vector<double>> velocities) const;
    SpeciesEnsemble without_velocities() const;

private:
    std::size_t dim_ = 1;
    std::vector<double> positions_;
    std::optional<std::vector<double>> velocities_;
    std::vector<double> weights_;
};

/// All species at one instant. Species share the dimension and either all or
/// none of them carry velocities.
class MultiSpeciesState
{
public:
    MultiSpeciesState() = default;
    MultiSpeciesState(double time, std::vector<SpeciesEnsemble> species);

    double time() const noexcept { return time_; }
    std::size_t species_count() const noexcept { return species_.size(); }
    std::size_t dim() const noexcept { return species_.empty() ? 0 : species_.front().dim(); }
    bool has_velocities() const noexcept { return !species_.empty() && species_.front().has_velocities(); }
    std::size_t total_particles() const noexcept;

    const SpeciesEnsemble& operator[](std::size_t i) const { return species_[i]; }
    const std::vector<SpeciesEnsemble>& species() const noexcept { return species_; }

    MultiSpeciesState with_time(double t) const { return MultiSpeciesState(t, species_); }
    MultiSpeciesState positions_only() const;

private:
    double time_ = 0.0;
    std::vector<SpeciesEnsemble> species_;
};

} // namespace kinswarm

#endif
