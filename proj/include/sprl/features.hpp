#pragma once

#include "sprl/core.hpp"
#include "sprl/env.hpp"
#include "sprl/mrp.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace sprl {

/// A fixed set of k basis functions over states. Implementations are
/// immutable after construction and safe to evaluate concurrently.
class Dictionary {
public:
    virtual ~Dictionary() = default;
    virtual Index k() const = 0;
    virtual Vector evaluate(const State& s) const = 0;
    virtual std::string description(Index j) const = 0;

    std::vector<std::string> descriptions() const
    {
        std::vector<std::string> out;
        out.reserve(static_cast<std::size_t>(k()));
        for (Index j = 0; j < k(); ++j) out.push_back(description(j));
        return out;
    }
};

using DictionaryPtr = std::shared_ptr<const Dictionary>;

class IndicatorDictionary final : public Dictionary {
public:
    explicit IndicatorDictionary(Index n_states) : n_(n_states)
    {
        require(n_states >= 1, "indicator dictionary: need at least one state");
    }

    Index k() const override { return n_; }

    Vector evaluate(const State& s) const override
    {
        const Index i = state_index(s);
        require(i >= 0 && i < n_, "indicator dictionary: state out of range");
        Vector phi = Vector::Zero(n_);
        phi(i) = 1.0;
        return phi;
    }

    std::string description(Index j) const override { return "I(s = " + std::to_string(j) + ")"; }

private:
    Index n_;
};

/// Arbitrary per-state feature table for discrete state spaces; row s holds
/// the feature values of state s.
class TableDictionary final : public Dictionary {
public:
    explicit TableDictionary(Matrix table) : table_(std::move(table))
    {
        require(table_.rows() >= 1 && table_.cols() >= 1, "table dictionary: empty table");
        require(table_.allFinite(), "table dictionary: non-finite entries");
    }

    Index k() const override { return table_.cols(); }

    Vector evaluate(const State& s) const override
    {
        const Index i = state_index(s);
        require(i >= 0 && i < table_.rows(), "table dictionary: state out of range");
        return table_.row(i).transpose();
    }

    std::string description(Index j) const override { return "table[" + std::to_string(j) + "]"; }

    const Matrix& table() const { return table_; }

private:
    Matrix table_;
};

/// Constant feature followed by Gaussian bumps on regular grids of several
/// resolutions. A grid of size g places g points per axis (g^d in total),
/// spanning the box corners; the bump width along each axis is
/// width_factor times that axis' grid spacing.
class RbfGridDictionary final : public Dictionary {
public:
    RbfGridDictionary(Box bounds, std::vector<int> grid_sizes, double width_factor = 1.0)
        : bounds_(std::move(bounds)), grid_sizes_(std::move(grid_sizes)), width_factor_(width_factor)
    {
        require(!grid_sizes_.empty(), "rbf dictionary: empty grid list");
        require(bounds_.dim() >= 1 && bounds_.hi.size() == bounds_.dim(), "rbf dictionary: malformed bounds");
        require((bounds_.hi.array() > bounds_.lo.array()).all(), "rbf dictionary: empty box");
        require(width_factor_ > 0.0, "rbf dictionary: width factor must be positive");
        const Index d = bounds_.dim();
        for (int g : grid_sizes_) {
            require(g >= 1, "rbf dictionary: grid sizes must be positive");
            const Vector extent = bounds_.hi - bounds_.lo;
            const Vector spacing = g > 1 ? Vector(extent / static_cast<double>(g - 1)) : extent;
            const Vector width = width_factor_ * spacing;
            Index cells = 1;
            for (Index a = 0; a < d; ++a) cells *= g;
            for (Index c = 0; c < cells; ++c) {
                Vector center(d);
                Index rem = c;
                for (Index a = 0; a < d; ++a) {
                    const Index pos = rem % g;
                    rem /= g;
                    center(a) = g > 1 ? bounds_.lo(a) + spacing(a) * static_cast<double>(pos)
                                      : 0.5 * (bounds_.lo(a) + bounds_.hi(a));
                }
                centers_.push_back(center);
                inv_widths_.push_back(width.cwiseInverse());
                grid_of_.push_back(g);
            }
        }
    }

    Index k() const override { return 1 + static_cast<Index>(centers_.size()); }

    Vector evaluate(const State& s) const override
    {
        require(s.size() == bounds_.dim(), "rbf dictionary: state dimension mismatch");
        Vector phi(k());
        phi(0) = 1.0;
        for (std::size_t j = 0; j < centers_.size(); ++j) {
            const double q = (s - centers_[j]).cwiseProduct(inv_widths_[j]).squaredNorm();
            phi(static_cast<Index>(j) + 1) = std::exp(-0.5 * q);
        }
        return phi;
    }

    std::string description(Index j) const override
    {
        if (j == 0) return "constant";
        const auto& c = centers_[static_cast<std::size_t>(j - 1)];
        std::ostringstream os;
        os << "rbf g=" << grid_of_[static_cast<std::size_t>(j - 1)] << " at (";
        for (Index a = 0; a < c.size(); ++a) os << (a ? ", " : "") << c(a);
        os << ")";
        return os.str();
    }

    const State& center(Index j) const { return centers_[static_cast<std::size_t>(j - 1)]; }

private:
    Box bounds_;
    std::vector<int> grid_sizes_;
    double width_factor_;
    std::vector<State> centers_;
    std::vector<Vector> inv_widths_;
    std::vector<int> grid_of_;
};

inline Index rbf_feature_count(Index dim, const std::vector<int>& grid_sizes)
{
    Index k = 1;
    for (int g : grid_sizes) {
        Index cells = 1;
        for (Index a = 0; a < dim; ++a) cells *= g;
        k += cells;
    }
    return k;
}

// ---------------------------------------------------------------------------
// Dictionary configuration (plain key/value text)

struct DictionaryConfig {
    std::string type = "rbf"; // rbf | indicator
    std::vector<int> grid_sizes;
    double width_factor = 1.0;
    std::optional<Box> bounds; // defaults to the environment's bounds

    /// Grid splits chosen so 1 + sum g^d lands on the benchmark feature
    /// counts: chain 208, mountain car 1366, puddleworld 570.
    static DictionaryConfig default_for(const std::string& env_name)
    {
        DictionaryConfig c;
        if (env_name == "chain50") c.grid_sizes = {7, 25, 50, 125};
        else if (env_name == "mountain_car" || env_name == "mountaincar") c.grid_sizes = {1, 2, 4, 8, 16, 32};
        else if (env_name == "puddleworld") c.grid_sizes = {5, 12, 20};
        else c.type = "indicator";
        return c;
    }

    DictionaryPtr build(const GenerativeEnv& env) const
    {
        if (type == "indicator") {
            const auto* mrp = env.exact_model();
            require(mrp != nullptr, "indicator dictionary requires a discrete environment");
            return std::make_shared<const IndicatorDictionary>(mrp->n_states());
        }
        require(type == "rbf", "unknown dictionary type '" + type + "'");
        return std::make_shared<const RbfGridDictionary>(bounds.value_or(env.bounds()), grid_sizes, width_factor);
    }

    /// Key/value lines understood by parse_entry (prefixed "dict.").
    std::string to_text() const
    {
        std::ostringstream os;
        os.precision(17);
        os << "dict.type = " << type << "\n";
        if (type == "rbf") {
            os << "dict.grid_sizes = ";
            for (std::size_t i = 0; i < grid_sizes.size(); ++i) os << (i ? "," : "") << grid_sizes[i];
            os << "\ndict.width_factor = " << width_factor << "\n";
            if (bounds) {
                os << "dict.bounds = ";
                for (Index a = 0; a < bounds->dim(); ++a)
                    os << (a ? "," : "") << bounds->lo(a) << ":" << bounds->hi(a);
                os << "\n";
            }
        }
        return os.str();
    }

    /// Applies one "dict.*" key; returns false for keys it does not own.
    bool parse_entry(const std::string& key, const std::string& value)
    {
        if (key == "dict.type") {
            require(value == "rbf" || value == "indicator", "dict.type must be rbf or indicator");
            type = value;
        } else if (key == "dict.grid_sizes") {
            grid_sizes.clear();
            for (const auto& tok : split(value, ',')) grid_sizes.push_back(std::stoi(tok));
        } else if (key == "dict.width_factor") {
            width_factor = std::stod(value);
        } else if (key == "dict.bounds") {
            const auto axes = split(value, ',');
            Box b{Vector(static_cast<Index>(axes.size())), Vector(static_cast<Index>(axes.size()))};
            for (std::size_t a = 0; a < axes.size(); ++a) {
                const auto lh = split(axes[a], ':');
                require(lh.size() == 2, "dict.bounds entries must be lo:hi");
                b.lo(static_cast<Index>(a)) = std::stod(lh[0]);
                b.hi(static_cast<Index>(a)) = std::stod(lh[1]);
            }
            bounds = b;
        } else {
            return false;
        }
        return true;
    }

    static std::vector<std::string> split(const std::string& s, char sep)
    {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream is(s);
        while (std::getline(is, cur, sep)) {
            const auto b = cur.find_first_not_of(" \t");
            const auto e = cur.find_last_not_of(" \t");
            if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Assembled sample matrices

/// Feature matrices over a sample: Phi on start states, PhiNext on next
/// states and PhiNext2 on the second next-state draw when present. Every
/// matrix holds raw features times diag(scales).
struct FeatureData {
    Matrix Phi;
    Matrix PhiNext;
    std::optional<Matrix> PhiNext2;
    Vector R;
    double gamma = 0.0;
    Vector scales;
    std::vector<bool> zero_column;

    Index n() const { return Phi.rows(); }
    Index k() const { return Phi.cols(); }
    bool doubled() const { return PhiNext2.has_value(); }

    /// V(s) = phi(s)^T diag(scales) w for weights learned on this data.
    double value(const Dictionary& dict, const State& s, const Vector& w) const
    {
        return dict.evaluate(s).dot(scales.cwiseProduct(w));
    }
};

inline constexpr double zero_column_rms = 1e-12;

/// Evaluates the dictionary on every sample. With normalize, each column of
/// Phi is scaled to unit root-mean-square and the same scale is applied to
/// the next-state matrices; all-zero columns keep scale 1 and are flagged.
inline FeatureData assemble(const Dictionary& dict, const SampleSet& samples, double gamma, bool normalize)
{
    require(samples.size() >= 1, "assemble: empty sample set");
    const Index n = static_cast<Index>(samples.size());
    const Index k = dict.k();
    FeatureData d;
    d.gamma = gamma;
    d.Phi.resize(n, k);
    d.PhiNext.resize(n, k);
    if (samples.doubled()) d.PhiNext2.emplace(n, k);
    d.R.resize(n);
    auto fill = [&](Matrix& M, Index i, const State& s) {
        Vector phi = dict.evaluate(s);
        if (phi.size() != k || !phi.allFinite()) throw Error("assemble: dictionary returned non-finite features");
        M.row(i) = phi.transpose();
    };
    for (Index i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        fill(d.Phi, i, samples.states[u]);
        fill(d.PhiNext, i, samples.next[u]);
        if (samples.doubled()) fill(*d.PhiNext2, i, (*samples.next2)[u]);
        d.R(i) = samples.rewards[u];
    }
    d.scales = Vector::Ones(k);
    d.zero_column.assign(static_cast<std::size_t>(k), false);
    for (Index j = 0; j < k; ++j) {
        const double rms = std::sqrt(d.Phi.col(j).squaredNorm() / static_cast<double>(n));
        if (rms <= zero_column_rms) {
            d.zero_column[static_cast<std::size_t>(j)] = true;
        } else if (normalize) {
            d.scales(j) = 1.0 / rms;
        }
    }
    if (normalize) {
        d.Phi *= d.scales.asDiagonal();
        d.PhiNext *= d.scales.asDiagonal();
        if (d.PhiNext2) *d.PhiNext2 *= d.scales.asDiagonal();
    }
    return d;
}

/// Exact-model data: one row per state with PhiNext = P Phi.
inline FeatureData exact_feature_data(const DiscreteMrp& mrp, const Matrix& Phi)
{
    require(Phi.rows() == mrp.n_states(), "exact_feature_data: Phi must have one row per state");
    FeatureData d;
    d.Phi = Phi;
    d.PhiNext = mrp.P() * Phi;
    d.R = mrp.R();
    d.gamma = mrp.gamma();
    d.scales = Vector::Ones(Phi.cols());
    d.zero_column.assign(static_cast<std::size_t>(Phi.cols()), false);
    for (Index j = 0; j < Phi.cols(); ++j)
        d.zero_column[static_cast<std::size_t>(j)] = Phi.col(j).norm() == 0.0;
    return d;
}

/// Matrix of dictionary features over every state of a discrete MRP.
inline Matrix state_feature_matrix(const Dictionary& dict, Index n_states)
{
    Matrix Phi(n_states, dict.k());
    for (Index s = 0; s < n_states; ++s) Phi.row(s) = dict.evaluate(discrete_state(s)).transpose();
    return Phi;
}

} // namespace sprl
