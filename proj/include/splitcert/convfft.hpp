#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "splitcert/model.hpp"

namespace splitcert {

/// Fourier-domain cache for the graph projection of a multi-channel circular
/// convolution layer. Stores the per-frequency channel-mixing blocks
/// D[f] (out_ch x in_ch) and the precomputed inverses of (I + D[f]^H D[f]),
/// never the expanded block-diagonal operator.
class FourierConvCache {
 public:
  explicit FourierConvCache(const Layer& layer);
  ~FourierConvCache();

  FourierConvCache(const FourierConvCache&) = delete;
  FourierConvCache& operator=(const FourierConvCache&) = delete;

  /// Solves (I + W^T W) y = a + W^T c and sets z = W y, column-wise over the
  /// batch. Inputs/outputs are flat (ch*H*W) x batch, channels-first.
  void project(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c, Eigen::MatrixXd& y,
               Eigen::MatrixXd& z) const;

  std::int64_t in_channels() const { return in_ch_; }
  std::int64_t out_channels() const { return out_ch_; }
  std::int64_t bins() const { return bins_; }

  /// Per-frequency mixing block D[f]; row = output channel, col = input channel.
  Eigen::MatrixXcd mixing_block(std::int64_t f) const;
  /// Per-frequency inverse block of (I + D[f]^H D[f]).
  Eigen::MatrixXcd inverse_block(std::int64_t f) const;

  double max_imag_residue() const { return max_imag_residue_; }

 private:
  void fft2(const double* in_real, std::complex<double>* out) const;
  void ifft2(const std::complex<double>* in, double* out_real, double* imag_peak) const;

  std::int64_t in_ch_ = 0, out_ch_ = 0, h_ = 0, w_ = 0, bins_ = 0;
  // D stored as bins_ blocks of (out_ch x in_ch), column-major per block.
  std::vector<std::complex<double>> D_;
  // Inverse blocks of (I + D^H D), bins_ blocks of (in_ch x in_ch).
  std::vector<std::complex<double>> inv_blocks_;
  void* plan_fwd_ = nullptr;
  void* plan_bwd_ = nullptr;
  mutable double max_imag_residue_ = 0.0;
};

std::shared_ptr<FourierConvCache> build_fourier_cache(const Layer& layer);

void project_circ_graph(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                        const FourierConvCache& cache, Eigen::MatrixXd& y,
                        Eigen::MatrixXd& z);

}  // namespace splitcert
