#include "nhmech/sampling.hpp"

namespace nhmech {

namespace {
constexpr unsigned kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
}

double halton(unsigned long index, unsigned base) {
  double f = 1.0;
  double r = 0.0;
  while (index > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

std::vector<Eigen::VectorXd> halton_unit(int count, int dim, unsigned seed) {
  if (dim > static_cast<int>(sizeof(kPrimes) / sizeof(kPrimes[0])))
    throw Error(ErrorClass::Usage, "sampling dimension too large");
  std::vector<Eigen::VectorXd> out;
  out.reserve(static_cast<std::size_t>(count));
  // Skip ahead so distinct seeds give distinct, reproducible subsequences;
  // index 0 (all zeros) is never used.
  unsigned long start = 1ul + 97ul * static_cast<unsigned long>(seed);
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd p(dim);
    for (int d = 0; d < dim; ++d)
      p[d] = halton(start + static_cast<unsigned long>(k), kPrimes[d]);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Eigen::VectorXd> sample_points(const DomainBox& box, const SampleSpec& spec) {
  auto unit = halton_unit(spec.count, box.dim(), spec.seed);
  for (auto& p : unit)
    p = box.min.array() + p.array() * (box.max - box.min).array();
  return unit;
}

} // namespace nhmech
