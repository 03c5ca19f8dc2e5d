#pragma once

// Data-parallel inner loops. Every kernel has a portable scalar reference and
// optional vectorised variants; one table is selected at runtime from the CPU
// features (override with FIBERSEG_ISA=scalar|avx2).

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace fiberseg::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// Same-padded, stride-1 3D convolution on one sample. The input is stored
/// pre-padded by kernel/2 zeros on every face: (in, D+k-1, H+k-1, W+k-1).
struct ConvShape {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;  // 1 or 3
  int64_t depth = 1;
  int64_t height = 1;
  int64_t width = 1;

  int64_t voxels() const { return depth * height * width; }
  int64_t padded_depth() const { return depth + kernel - 1; }
  int64_t padded_height() const { return height + kernel - 1; }
  int64_t padded_width() const { return width + kernel - 1; }
  int64_t padded_voxels() const { return padded_depth() * padded_height() * padded_width(); }
  int taps() const { return kernel * kernel * kernel; }
};

struct KernelTable {
  Isa isa;
  /// y[co] = sum_ci sum_tap w[co][ci][tap] * x_pad[ci](p + tap). Overwrites y.
  void (*conv_forward)(const ConvShape&, const double* x_pad, const double* w, double* y);
  /// dw[co][ci][tap] += sum_p dy[co](p) * x_pad[ci](p + tap).
  void (*conv_weight_grad)(const ConvShape&, const double* x_pad, const double* dy, double* dw);
  double (*squared_distance)(const double* a, const double* b, size_t n);
};

const KernelTable& scalar_kernels();
/// nullptr when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2_kernels();

Isa detect_isa();
const KernelTable& kernels_for(Isa isa);
/// The table used by the library; chosen once at first use.
const KernelTable& active();
void set_active_isa(Isa isa);

}  // namespace fiberseg::simd
