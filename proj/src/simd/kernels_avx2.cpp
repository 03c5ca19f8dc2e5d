// AVX2 + FMA variants. Compiled with -mavx2 -mfma and only reached after
// the runtime CPU check in dispatch.cpp.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "fiberseg/simd/kernels.hpp"

namespace fiberseg::simd {

namespace {

constexpr int kCoBlock = 4;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Weights of one output-channel block, interleaved so the four co weights
// of a (ci, tap) pair are adjacent: packed[(ci * taps + tap) * 4 + c].
void pack_weights(const ConvShape& s, const double* w, int co0, std::vector<double>& packed) {
  const int taps = s.taps();
  packed.assign(static_cast<size_t>(s.in_channels) * taps * kCoBlock, 0.0);
  const int nco = std::min(kCoBlock, s.out_channels - co0);
  for (int c = 0; c < nco; ++c) {
    for (int ci = 0; ci < s.in_channels; ++ci) {
      const double* src = w + (static_cast<int64_t>(co0 + c) * s.in_channels + ci) * taps;
      for (int t = 0; t < taps; ++t) packed[(static_cast<size_t>(ci) * taps + t) * kCoBlock + c] = src[t];
    }
  }
}

template <int K>
void conv_forward_k(const ConvShape& s, const double* x_pad, const double* w, double* y) {
  constexpr int kTaps = K * K * K;
  const int64_t ph = s.padded_height(), pw = s.padded_width();
  const int64_t pplane = s.padded_voxels();
  const int64_t W = s.width;
  std::vector<double> packed;

  for (int co0 = 0; co0 < s.out_channels; co0 += kCoBlock) {
    const int nco = std::min(kCoBlock, s.out_channels - co0);
    pack_weights(s, w, co0, packed);
    for (int64_t z = 0; z < s.depth; ++z) {
      for (int64_t yy = 0; yy < s.height; ++yy) {
        double* out[kCoBlock];
        for (int c = 0; c < kCoBlock; ++c) {
          out[c] = y + static_cast<int64_t>(co0 + std::min(c, nco - 1)) * s.voxels() +
                   (z * s.height + yy) * W;
        }
        int64_t x = 0;
        for (; x + 8 <= W; x += 8) {
          __m256d acc[kCoBlock][2];
          for (auto& a : acc) a[0] = a[1] = _mm256_setzero_pd();
          for (int ci = 0; ci < s.in_channels; ++ci) {
            const double* in = x_pad + ci * pplane;
            const double* wp = packed.data() + static_cast<size_t>(ci) * kTaps * kCoBlock;
            for (int kz = 0; kz < K; ++kz) {
              for (int ky = 0; ky < K; ++ky) {
                const double* row = in + ((z + kz) * ph + yy + ky) * pw + x;
                for (int kx = 0; kx < K; ++kx, wp += kCoBlock) {
                  const __m256d v0 = _mm256_loadu_pd(row + kx);
                  const __m256d v1 = _mm256_loadu_pd(row + kx + 4);
                  for (int c = 0; c < kCoBlock; ++c) {
                    const __m256d wv = _mm256_broadcast_sd(wp + c);
                    acc[c][0] = _mm256_fmadd_pd(wv, v0, acc[c][0]);
                    acc[c][1] = _mm256_fmadd_pd(wv, v1, acc[c][1]);
                  }
                }
              }
            }
          }
          for (int c = 0; c < nco; ++c) {
            _mm256_storeu_pd(out[c] + x, acc[c][0]);
            _mm256_storeu_pd(out[c] + x + 4, acc[c][1]);
          }
        }
        for (; x + 4 <= W; x += 4) {
          __m256d acc[kCoBlock];
          for (auto& a : acc) a = _mm256_setzero_pd();
          for (int ci = 0; ci < s.in_channels; ++ci) {
            const double* in = x_pad + ci * pplane;
            const double* wp = packed.data() + static_cast<size_t>(ci) * kTaps * kCoBlock;
            for (int kz = 0; kz < K; ++kz) {
              for (int ky = 0; ky < K; ++ky) {
                const double* row = in + ((z + kz) * ph + yy + ky) * pw + x;
                for (int kx = 0; kx < K; ++kx, wp += kCoBlock) {
                  const __m256d v0 = _mm256_loadu_pd(row + kx);
                  for (int c = 0; c < kCoBlock; ++c) {
                    acc[c] = _mm256_fmadd_pd(_mm256_broadcast_sd(wp + c), v0, acc[c]);
                  }
                }
              }
            }
          }
          for (int c = 0; c < nco; ++c) _mm256_storeu_pd(out[c] + x, acc[c]);
        }
        for (; x < W; ++x) {
          double acc[kCoBlock] = {0.0, 0.0, 0.0, 0.0};
          for (int ci = 0; ci < s.in_channels; ++ci) {
            const double* in = x_pad + ci * pplane;
            const double* wp = packed.data() + static_cast<size_t>(ci) * kTaps * kCoBlock;
            for (int kz = 0; kz < K; ++kz) {
              for (int ky = 0; ky < K; ++ky) {
                const double* row = in + ((z + kz) * ph + yy + ky) * pw + x;
                for (int kx = 0; kx < K; ++kx, wp += kCoBlock) {
                  for (int c = 0; c < kCoBlock; ++c) acc[c] += wp[c] * row[kx];
                }
              }
            }
          }
          for (int c = 0; c < nco; ++c) out[c][x] = acc[c];
        }
      }
    }
  }
}

template <int K>
void conv_weight_grad_k(const ConvShape& s, const double* x_pad, const double* dy, double* dw) {
  constexpr int kTaps = K * K * K;
  const int64_t ph = s.padded_height(), pw = s.padded_width();
  const int64_t pplane = s.padded_voxels();
  const int64_t W = s.width;
  const std::vector<double> zeros(static_cast<size_t>(s.voxels()), 0.0);

  for (int co0 = 0; co0 < s.out_channels; co0 += kCoBlock) {
    const int nco = std::min(kCoBlock, s.out_channels - co0);
    const double* grad[kCoBlock];
    for (int c = 0; c < kCoBlock; ++c) {
      grad[c] = c < nco ? dy + static_cast<int64_t>(co0 + c) * s.voxels() : zeros.data();
    }
    for (int ci = 0; ci < s.in_channels; ++ci) {
      const double* in = x_pad + ci * pplane;
      for (int kz = 0; kz < K; ++kz) {
        for (int ky = 0; ky < K; ++ky) {
          __m256d acc[kCoBlock][K];
          double tail[kCoBlock][K] = {};
          for (auto& a : acc) {
            for (auto& v : a) v = _mm256_setzero_pd();
          }
          for (int64_t z = 0; z < s.depth; ++z) {
            for (int64_t yy = 0; yy < s.height; ++yy) {
              const double* row = in + ((z + kz) * ph + yy + ky) * pw;
              const int64_t goff = (z * s.height + yy) * W;
              int64_t x = 0;
              for (; x + 4 <= W; x += 4) {
                __m256d g[kCoBlock];
                for (int c = 0; c < kCoBlock; ++c) g[c] = _mm256_loadu_pd(grad[c] + goff + x);
                for (int kx = 0; kx < K; ++kx) {
                  const __m256d v = _mm256_loadu_pd(row + x + kx);
                  for (int c = 0; c < kCoBlock; ++c) acc[c][kx] = _mm256_fmadd_pd(g[c], v, acc[c][kx]);
                }
              }
              for (; x < W; ++x) {
                for (int c = 0; c < kCoBlock; ++c) {
                  const double gv = grad[c][goff + x];
                  for (int kx = 0; kx < K; ++kx) tail[c][kx] += gv * row[x + kx];
                }
              }
            }
          }
          for (int c = 0; c < nco; ++c) {
            double* wk = dw + (static_cast<int64_t>(co0 + c) * s.in_channels + ci) * kTaps;
            for (int kx = 0; kx < K; ++kx) wk[(kz * K + ky) * K + kx] += hsum(acc[c][kx]) + tail[c][kx];
          }
        }
      }
    }
  }
}

void conv_forward(const ConvShape& s, const double* x_pad, const double* w, double* y) {
  if (s.kernel == 3) {
    conv_forward_k<3>(s, x_pad, w, y);
  } else {
    conv_forward_k<1>(s, x_pad, w, y);
  }
}

void conv_weight_grad(const ConvShape& s, const double* x_pad, const double* dy, double* dw) {
  if (s.kernel == 3) {
    conv_weight_grad_k<3>(s, x_pad, dy, dw);
  } else {
    conv_weight_grad_k<1>(s, x_pad, dy, dw);
  }
}

double squared_distance(const double* a, const double* b, size_t n) {
  __m256d acc = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double sum = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

const KernelTable kAvx2{Isa::kAvx2, conv_forward, conv_weight_grad, squared_distance};

}  // namespace

const KernelTable& avx2_table() { return kAvx2; }

}  // namespace fiberseg::simd
