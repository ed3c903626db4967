// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

namespace anytsr {

// Transcendentals used inside hot loops. The float versions are branch-light
// Cephes-style polynomials (~3 ulp) that gcc auto-vectorizes; the double
// versions defer to libm, which the 64-bit gradcheck path relies on.

inline float fexp(float x) {
  x = x > 88.0f ? 88.0f : (x < -87.0f ? -87.0f : x);
  const float z = x * 1.44269504088896341f;  // x / ln2
  float kf = z + (z >= 0.0f ? 0.5f : -0.5f);
  const int32_t k = static_cast<int32_t>(kf);
  kf = static_cast<float>(k);
  // r = x - k*ln2 in two parts for accuracy
  float r = x - kf * 0.693359375f;
  r -= kf * -2.12194440e-4f;
  const float r2 = r * r;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  float y = p * r2 + r + 1.0f;
  int32_t bits;
  std::memcpy(&bits, &y, 4);
  bits += k << 23;
  std::memcpy(&y, &bits, 4);
  return y;
}

inline double fexp(double x) { return std::exp(x); }

inline float flog(float x) {
  // valid for x > 0; callers guarantee positivity
  int32_t bits;
  std::memcpy(&bits, &x, 4);
  int32_t e = ((bits >> 23) & 0xff) - 126;
  bits = (bits & 0x007fffff) | 0x3f000000;  // mantissa in [0.5, 1)
  float m;
  std::memcpy(&m, &bits, 4);
  if (m < 0.70710678118654752440f) {
    m += m;
    e -= 1;
  }
  const float r = m - 1.0f;
  const float r2 = r * r;
  float p = 7.0376836292e-2f;
  p = p * r + -1.1514610310e-1f;
  p = p * r + 1.1676998740e-1f;
  p = p * r + -1.2420140846e-1f;
  p = p * r + 1.4249322787e-1f;
  p = p * r + -1.6668057665e-1f;
  p = p * r + 2.0000714765e-1f;
  p = p * r + -2.4999993993e-1f;
  p = p * r + 3.3333331174e-1f;
  float y = p * r * r2;
  const float ef = static_cast<float>(e);
  y += ef * -2.12194440e-4f;
  y -= 0.5f * r2;
  y = r + y;
  y += ef * 0.693359375f;
  return y;
}

inline double flog(double x) { return std::log(x); }

template <typename T>
inline T sigmoid_v(T x) {
  return T(1) / (T(1) + fexp(-x));
}

template <typename T>
inline T softplus_v(T x) {
  // max(x,0) + log1p(exp(-|x|)), overflow-safe
  const T ax = x < T(0) ? -x : x;
  const T mx = x > T(0) ? x : T(0);
  return mx + flog(T(1) + fexp(-ax));
}

template <typename T>
inline T silu_v(T x) {
  return x * sigmoid_v(x);
}

}  // namespace anytsr
