#pragma once

#include "han/matrix.hpp"
#include "han/rng.hpp"

namespace han {

/// fan_out x fan_in matrix, entries i.i.d. N(0, 2/fan_in).
DenseMatrix kaiming_init(Rng& rng, std::size_t fan_in, std::size_t fan_out);

/// n x m matrix with orthonormal columns when n >= m (orthonormal rows
/// otherwise), from a Householder QR of a Gaussian sample. Signs are fixed
/// so the result is a deterministic function of the seed. Gain 1.
DenseMatrix orthogonal_init(Rng& rng, std::size_t n, std::size_t m);

/// Unit-norm Gaussian direction (reflector initialisation).
DenseVector unit_vector_init(Rng& rng, std::size_t n);

} // namespace han
