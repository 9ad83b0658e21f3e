#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace ota {

using cdouble = std::complex<double>;
using CVec = std::vector<cdouble>;
using RVec = std::vector<double>;

/// Real view of a complex vector: I components followed by Q components.
/// This is the classifier's input layout and the layout of every gradient.
RVec to_real(std::span<const cdouble> v);
CVec to_complex(std::span<const double> r);

double energy(std::span<const cdouble> v);       // sum |v_i|^2
double mean_power(std::span<const cdouble> v);   // energy / size
double norm2(std::span<const cdouble> v);        // sqrt(energy)

}  // namespace ota
