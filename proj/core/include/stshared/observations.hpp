#pragma once

#include <Eigen/Dense>

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace stshared {

enum class Outcome { Incidence = 0, Mortality = 1 };

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Panel of counts O[i,t,d] and populations n[i,t], area-fastest
/// (cell = t * A + i). Missing counts are NaN and drop out of the likelihood.
struct ObservationSet {
    int A = 0;
    int T = 0;
    Eigen::VectorXd counts_i;
    Eigen::VectorXd counts_m;
    Eigen::VectorXd population;

    static ObservationSet empty(int A, int T);

    int cells() const { return A * T; }
    double& count(int area, int period, Outcome d) {
        return (d == Outcome::Incidence ? counts_i : counts_m)[period * A + area];
    }
    double count(int area, int period, Outcome d) const {
        return (d == Outcome::Incidence ? counts_i : counts_m)[period * A + area];
    }
    /// Stacked counts (incidence cells, then mortality cells).
    Eigen::VectorXd stacked_counts() const;
    /// Throws DataError on shape mismatch, negative or non-integer counts,
    /// or non-positive populations.
    void validate() const;
    int missing() const;
};

/// CSV with header `area,period,outcome,count,population`; areas 0-based,
/// periods 1..T, outcome I or M, empty count = missing. A and T are
/// inferred (max area + 1, max period); every (area, period, outcome)
/// must appear exactly once and populations must agree between outcomes.
ObservationSet read_observations_csv(std::istream& in);
ObservationSet read_observations_file(const std::string& path);
void write_observations_csv(std::ostream& out, const ObservationSet& data);

}  // namespace stshared
