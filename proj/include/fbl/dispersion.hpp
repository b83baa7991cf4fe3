#pragma once

// Deterministic rate and variance formulas for the unit-noise Gaussian
// multiple-access channel. All rates are in nats.
//
// Subset-indexed quantities use bitmask indexing: a nonempty subset S of the
// users {1..K} is the mask with bit (i-1) set for every user i in S, and
// vectors/matrices store subset S at position mask - 1. For K = 2 the order is
// ({1}, {2}, {1,2}).

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace fbl {

inline constexpr int kMaxUsers = 16;

class SizeError : public std::length_error {
public:
    using std::length_error::length_error;
};

/// Nonempty subset of users as a bitmask.
class SubsetIndex {
public:
    constexpr explicit SubsetIndex(std::uint32_t mask) : mask_(mask) {
        if (mask == 0) throw std::invalid_argument("SubsetIndex: empty subset");
    }
    constexpr std::uint32_t mask() const noexcept { return mask_; }
    constexpr std::size_t position() const noexcept { return mask_ - 1; }
    int size() const noexcept { return __builtin_popcount(mask_); }
    bool contains(int user) const noexcept { return (mask_ >> user) & 1u; }  ///< user is 0-based
    bool subset_of(SubsetIndex other) const noexcept { return (mask_ & ~other.mask_) == 0; }

    friend constexpr bool operator==(SubsetIndex, SubsetIndex) = default;

private:
    std::uint32_t mask_;
};

/// Number of nonempty subsets, 2^K - 1.
std::size_t subset_count(int users);

/// Per-user power budgets P_1..P_K (linear, unit noise variance).
class PowerAllocation {
public:
    explicit PowerAllocation(std::vector<double> powers);
    /// K users with equal power P.
    static PowerAllocation symmetric(int users, double power);

    int users() const noexcept { return static_cast<int>(powers_.size()); }
    double operator[](int user) const { return powers_.at(static_cast<std::size_t>(user)); }
    std::span<const double> powers() const noexcept { return powers_; }

    /// Sum of powers over the subset; P_<empty> = 0 for mask 0.
    double sum(std::uint32_t mask) const noexcept;
    /// Sum of squared powers over the subset.
    double sum_of_squares(std::uint32_t mask) const noexcept;

private:
    std::vector<double> powers_;
};

double capacity(double power);
double dispersion_v(double power);
double cross_dispersion(int users, double power);

struct CapacityVector {
    int users = 0;
    std::vector<double> entries;

    double operator[](SubsetIndex s) const { return entries.at(s.position()); }
};

struct DispersionMatrix {
    int users = 0;
    Eigen::MatrixXd entries;

    double operator()(SubsetIndex a, SubsetIndex b) const {
        return entries(static_cast<Eigen::Index>(a.position()), static_cast<Eigen::Index>(b.position()));
    }
};

CapacityVector capacity_vector(const PowerAllocation& pa);

/// K-user dispersion matrix. Entry (S1, S2) is
///   [P<S1> P<S2> + 2 P<I> + (P<I>)^2 - sum_{s in I} P_s^2] / [2 (1 + P<S1>)(1 + P<S2>)]
/// with I = S1 n S2 and P<S> the sum of powers over S. For K = 2 this is the
/// explicit two-user matrix (V(P1), V12, V1_12; ...; V(P1+P2) + V_12).
DispersionMatrix dispersion_matrix(const PowerAllocation& pa);

/// Two-user dispersion matrix written out entry by entry.
Eigen::Matrix3d dispersion_matrix_two_user(double p1, double p2);

/// L(P, s) = 8 (Ps)^{3/2} / sqrt(2 pi) * sqrt((1 + 4Ps - sqrt(1 + 4Ps)) / (sqrt(1 + 4Ps) - 1)^5)
double l_function(double power, double s);

/// Radon-Nikodym constants between spherical-input and Gaussian-input outputs.
double kappa1(double power);
double kappa2(double p1, double p2);

struct AnalysisConstants {
    std::vector<double> kappa1;    ///< per user
    std::vector<double> l_values;  ///< L(P_i, 1 + P_i) per user
    std::vector<double> g;         ///< G_i = 3 log 2 * L(P_i, 1 + P_i)
    std::optional<double> kappa2;  ///< two-user only
    std::optional<double> k2;      ///< max of 1.5 L(u, 1 + P1 + P2) over the u interval
    std::optional<double> k2_argmax;
    std::optional<double> g12;     ///< 2 log 2 * K2
};

AnalysisConstants analysis_constants(const PowerAllocation& pa);

void to_json(nlohmann::json& j, const CapacityVector& c);
void to_json(nlohmann::json& j, const DispersionMatrix& v);
CapacityVector capacity_vector_from_json(const nlohmann::json& j);
DispersionMatrix dispersion_matrix_from_json(const nlohmann::json& j);

}  // namespace fbl
