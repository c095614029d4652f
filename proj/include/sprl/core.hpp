#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sprl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// A point in an environment's state space. Discrete environments store the
// 0-based state index as the single coordinate.
using State = Eigen::VectorXd;

using Rng = std::mt19937_64;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a normal-equation or fixed-point system is (numerically)
// singular and no L2 term is present to regularize it.
class DegenerateSystemError : public Error {
public:
    using Error::Error;
};

/// SplitMix64 finalizer; used to derive independent per-trial and
/// per-state seeds from a single configured seed.
inline std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    return mix_seed(mix_seed(base) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

inline State discrete_state(Index s)
{
    State x(1);
    x(0) = static_cast<double>(s);
    return x;
}

inline Index state_index(const State& s)
{
    return static_cast<Index>(s(0));
}

inline void require(bool cond, const std::string& what)
{
    if (!cond) throw std::invalid_argument(what);
}

} // namespace sprl
