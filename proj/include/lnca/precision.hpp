#pragma once

// The library is built once in single precision (training) and once in double
// precision (gradient checks). Each build lives in its own inline namespace so
// both can be linked into the same executable.
#ifdef LNCA_REAL_DOUBLE
#define LNCA_PRECISION f64
#else
#define LNCA_PRECISION f32
#endif
