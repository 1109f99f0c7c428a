#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace nodal {

/// The single seeded source behind every random draw of a run.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform(double a = 0.0, double b = 1.0) { return a + (b - a) * unit_(engine_); }
    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            v[i] = normal();
        }
        return v;
    }
    std::uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace nodal
