#pragma once

// Scalar type of the network library. The default build is float32; defining
// CODECOMP_REAL_F64 yields a float64 instantiation used by gradient checks.
// The inline namespace lets both instantiations coexist in one binary.

#if defined(CODECOMP_REAL_F64)
#define CODECOMP_PRECISION_NS f64
#else
#define CODECOMP_PRECISION_NS f32
#endif

#define CODECOMP_NN_BEGIN namespace codecomp { inline namespace CODECOMP_PRECISION_NS {
#define CODECOMP_NN_END } }

CODECOMP_NN_BEGIN

#if defined(CODECOMP_REAL_F64)
using real = double;
#else
using real = float;
#endif

CODECOMP_NN_END
