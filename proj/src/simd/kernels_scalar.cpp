// Portable reference kernels. These define the semantics the vectorised
// variants are tested against.

#include "fiberseg/simd/kernels.hpp"

namespace fiberseg::simd {

namespace {

void conv_forward(const ConvShape& s, const double* x_pad, const double* w, double* y) {
  const int k = s.kernel;
  const int64_t ph = s.padded_height(), pw = s.padded_width();
  const int64_t pplane = s.padded_voxels();
  for (int co = 0; co < s.out_channels; ++co) {
    double* out = y + co * s.voxels();
    for (int64_t z = 0; z < s.depth; ++z) {
      for (int64_t yy = 0; yy < s.height; ++yy) {
        for (int64_t x = 0; x < s.width; ++x) {
          double acc = 0.0;
          for (int ci = 0; ci < s.in_channels; ++ci) {
            const double* in = x_pad + ci * pplane;
            const double* wk = w + (static_cast<int64_t>(co) * s.in_channels + ci) * s.taps();
            for (int kz = 0; kz < k; ++kz) {
              for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                  acc += wk[(kz * k + ky) * k + kx] * in[((z + kz) * ph + yy + ky) * pw + x + kx];
                }
              }
            }
          }
          out[(z * s.height + yy) * s.width + x] = acc;
        }
      }
    }
  }
}

void conv_weight_grad(const ConvShape& s, const double* x_pad, const double* dy, double* dw) {
  const int k = s.kernel;
  const int64_t ph = s.padded_height(), pw = s.padded_width();
  const int64_t pplane = s.padded_voxels();
  for (int co = 0; co < s.out_channels; ++co) {
    const double* g = dy + co * s.voxels();
    for (int ci = 0; ci < s.in_channels; ++ci) {
      const double* in = x_pad + ci * pplane;
      double* wk = dw + (static_cast<int64_t>(co) * s.in_channels + ci) * s.taps();
      for (int kz = 0; kz < k; ++kz) {
        for (int ky = 0; ky < k; ++ky) {
          for (int kx = 0; kx < k; ++kx) {
            double acc = 0.0;
            for (int64_t z = 0; z < s.depth; ++z) {
              for (int64_t yy = 0; yy < s.height; ++yy) {
                for (int64_t x = 0; x < s.width; ++x) {
                  acc += g[(z * s.height + yy) * s.width + x] *
                         in[((z + kz) * ph + yy + ky) * pw + x + kx];
                }
              }
            }
            wk[(kz * k + ky) * k + kx] += acc;
          }
        }
      }
    }
  }
}

double squared_distance(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

const KernelTable kScalar{Isa::kScalar, conv_forward, conv_weight_grad, squared_distance};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace fiberseg::simd
