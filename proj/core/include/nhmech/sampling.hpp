#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nhmech/geometry.hpp"

namespace nhmech {

/// Deterministic low-discrepancy sampling (Halton). The seed offsets the
/// start index of the sequence, so identical (count, seed) pairs reproduce
/// byte-identical sample sets.
struct SampleSpec {
  int count = 256;
  unsigned seed = 42;
};

/// k-th element of the Halton sequence in the given prime base, k >= 1.
double halton(unsigned long index, unsigned base);

/// `count` points of dimension `dim` in [0,1)^dim.
std::vector<Eigen::VectorXd> halton_unit(int count, int dim, unsigned seed);

/// Points mapped into the box.
std::vector<Eigen::VectorXd> sample_points(const DomainBox& box, const SampleSpec& spec);

} // namespace nhmech
