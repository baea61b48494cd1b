#pragma once

// Tensor scalar type. Builds default to float; defining VORA_DOUBLE builds
// the same code in double precision under vora::f64, so both variants can
// link into one binary.
#ifdef VORA_DOUBLE
#define VORA_BEGIN_NAMESPACE \
  namespace vora {           \
  inline namespace f64 {
#else
#define VORA_BEGIN_NAMESPACE \
  namespace vora {           \
  inline namespace f32 {
#endif
#define VORA_END_NAMESPACE \
  }                        \
  }

VORA_BEGIN_NAMESPACE
#ifdef VORA_DOUBLE
using real = double;
#else
using real = float;
#endif
VORA_END_NAMESPACE
