#include "kinswarm/parallel.hpp"

#include "kinswarm/error.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace kinswarm {

std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::SingularEvaluation: return "SingularEvaluation";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NotRegularizable: return "NotRegularizable";
    case ErrorKind::SingularEntry: return "SingularEntry";
    case ErrorKind::InvalidKernel: return "InvalidKernel";
    case ErrorKind::InvalidState: return "InvalidState";
    case ErrorKind::SchemeMismatch: return "SchemeMismatch";
    case ErrorKind::MissingVelocities: return "MissingVelocities";
    case ErrorKind::SizeCap: return "SizeCap";
    case ErrorKind::SpeciesCountMismatch: return "SpeciesCountMismatch";
    case ErrorKind::InvalidMeasure: return "InvalidMeasure";
    case ErrorKind::GridTooSmall: return "GridTooSmall";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::FieldEvaluationFailure: return "FieldEvaluationFailure";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::DegenerateInitialDistance: return "DegenerateInitialDistance";
    case ErrorKind::QuadratureDivergence: return "QuadratureDivergence";
    case ErrorKind::CFLViolation: return "CFLViolation";
    case ErrorKind::InsufficientValues: return "InsufficientValues";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::IoFailure: return "IoFailure";
    }
    return "Unknown";
}

namespace {

std::atomic<std::size_t> g_override{0};

std::size_t env_workers()
{
    if (const char* env = std::getenv(kWorkersEnv)) {
        try {
            long value = std::stol(env);
            if (value > 0)
                return static_cast<std::size_t>(value);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

} // namespace

std::size_t worker_count()
{
    std::size_t o = g_override.load();
    return o ? o : env_workers();
}

void set_worker_count(std::size_t workers) { g_override.store(workers); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk)
{
    if (n == 0)
        return;
    std::size_t workers = std::min(worker_count(), (n + min_chunk - 1) / std::max<std::size_t>(min_chunk, 1));
    if (workers <= 1) {
        body(0, n);
        return;
    }

    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> threads;
    threads.reserve(workers - 1);
    auto range = [&](std::size_t w) {
        std::size_t begin = n * w / workers;
        std::size_t end = n * (w + 1) / workers;
        try {
            body(begin, end);
        } catch (...) {
            errors[w] = std::current_exception();
        }
    };
    for (std::size_t w = 1; w < workers; ++w)
        threads.emplace_back(range, w);
    range(0);
    for (auto& t : threads)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace kinswarm
