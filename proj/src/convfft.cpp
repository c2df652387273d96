#include "splitcert/convfft.hpp"

#include <mutex>

#include <fftw3.h>

namespace splitcert {

namespace {
// FFTW plan creation is not thread-safe; execution via the new-array interface is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

void FourierConvCache::fft2(const double* in_real, std::complex<double>* out) const {
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(bins_));
  for (std::int64_t i = 0; i < bins_; ++i) buf[static_cast<std::size_t>(i)] = in_real[i];
  fftw_execute_dft(static_cast<fftw_plan>(plan_fwd_),
                   reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(out));
}

void FourierConvCache::ifft2(const std::complex<double>* in, double* out_real,
                             double* imag_peak) const {
  std::vector<std::complex<double>> buf(in, in + bins_);
  std::vector<std::complex<double>> out(static_cast<std::size_t>(bins_));
  fftw_execute_dft(static_cast<fftw_plan>(plan_bwd_),
                   reinterpret_cast<fftw_complex*>(buf.data()),
                   reinterpret_cast<fftw_complex*>(out.data()));
  const double scale = 1.0 / static_cast<double>(bins_);
  double peak = 0.0;
  for (std::int64_t i = 0; i < bins_; ++i) {
    out_real[i] = out[static_cast<std::size_t>(i)].real() * scale;
    peak = std::max(peak, std::abs(out[static_cast<std::size_t>(i)].imag()) * scale);
  }
  if (imag_peak) *imag_peak = std::max(*imag_peak, peak);
}

FourierConvCache::FourierConvCache(const Layer& layer) {
  if (layer.kind != LayerKind::CircularConv)
    throw ShapeError("fourier cache requires a circular conv layer");
  layer.validate();
  out_ch_ = layer.kernels.shape[0];
  in_ch_ = layer.kernels.shape[1];
  const std::int64_t kh = layer.kernels.shape[2], kw = layer.kernels.shape[3];
  h_ = layer.shape_in[1];
  w_ = layer.shape_in[2];
  bins_ = h_ * w_;
  if (kh > h_ || kw > w_) throw GeometryError("conv kernel larger than spatial extent");

  {
    std::lock_guard<std::mutex> lock(plan_mutex());
    std::vector<std::complex<double>> scratch(static_cast<std::size_t>(bins_));
    auto* c = reinterpret_cast<fftw_complex*>(scratch.data());
    plan_fwd_ = fftw_plan_dft_2d(static_cast<int>(h_), static_cast<int>(w_), c, c,
                                 FFTW_FORWARD, FFTW_ESTIMATE);
    plan_bwd_ = fftw_plan_dft_2d(static_cast<int>(h_), static_cast<int>(w_), c, c,
                                 FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  // Mixing blocks: with the cross-correlation convention z_j = sum_i K_ji (+) x_i,
  // the per-bin factor is conj(FFT2(K_ji)) with the kernel zero-embedded at the
  // origin, so a delta kernel gives D = 1 at every bin.
  D_.assign(static_cast<std::size_t>(bins_ * out_ch_ * in_ch_), {0.0, 0.0});
  std::vector<double> embed(static_cast<std::size_t>(bins_));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(bins_));
  for (std::int64_t j = 0; j < out_ch_; ++j)
    for (std::int64_t i = 0; i < in_ch_; ++i) {
      std::fill(embed.begin(), embed.end(), 0.0);
      for (std::int64_t qy = 0; qy < kh; ++qy)
        for (std::int64_t qx = 0; qx < kw; ++qx)
          embed[static_cast<std::size_t>(qy * w_ + qx)] = layer.kernels.data
              [static_cast<std::size_t>(((j * in_ch_ + i) * kh + qy) * kw + qx)];
      fft2(embed.data(), spec.data());
      for (std::int64_t f = 0; f < bins_; ++f)
        D_[static_cast<std::size_t>((f * out_ch_ + j) * in_ch_ + i)] =
            std::conj(spec[static_cast<std::size_t>(f)]);
    }

  // Per-bin inverse blocks of (I + D^H D), size in_ch x in_ch. The
  // single-channel case reduces to 1 / (1 + |D|^2).
  inv_blocks_.assign(static_cast<std::size_t>(bins_ * in_ch_ * in_ch_), {0.0, 0.0});
#pragma omp parallel for schedule(static)
  for (std::int64_t f = 0; f < bins_; ++f) {
    Eigen::MatrixXcd Df = mixing_block(f);
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Identity(in_ch_, in_ch_) + Df.adjoint() * Df;
    Eigen::MatrixXcd inv = M.partialPivLu().solve(Eigen::MatrixXcd::Identity(in_ch_, in_ch_));
    for (std::int64_t r = 0; r < in_ch_; ++r)
      for (std::int64_t cidx = 0; cidx < in_ch_; ++cidx)
        inv_blocks_[static_cast<std::size_t>((f * in_ch_ + r) * in_ch_ + cidx)] = inv(r, cidx);
  }
}

FourierConvCache::~FourierConvCache() {
  std::lock_guard<std::mutex> lock(plan_mutex());
  if (plan_fwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
  if (plan_bwd_) fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

Eigen::MatrixXcd FourierConvCache::mixing_block(std::int64_t f) const {
  Eigen::MatrixXcd Df(out_ch_, in_ch_);
  for (std::int64_t j = 0; j < out_ch_; ++j)
    for (std::int64_t i = 0; i < in_ch_; ++i)
      Df(j, i) = D_[static_cast<std::size_t>((f * out_ch_ + j) * in_ch_ + i)];
  return Df;
}

Eigen::MatrixXcd FourierConvCache::inverse_block(std::int64_t f) const {
  Eigen::MatrixXcd inv(in_ch_, in_ch_);
  for (std::int64_t r = 0; r < in_ch_; ++r)
    for (std::int64_t c = 0; c < in_ch_; ++c)
      inv(r, c) = inv_blocks_[static_cast<std::size_t>((f * in_ch_ + r) * in_ch_ + c)];
  return inv;
}

void FourierConvCache::project(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                               Eigen::MatrixXd& y, Eigen::MatrixXd& z) const {
  const std::int64_t na = in_ch_ * bins_, nc = out_ch_ * bins_;
  if (a.rows() != na || c.rows() != nc || a.cols() != c.cols())
    throw ShapeError("circular conv projection shape mismatch");
  const Eigen::Index batch = a.cols();
  y.resize(na, batch);
  z.resize(nc, batch);

  for (Eigen::Index col = 0; col < batch; ++col) {
    std::vector<std::complex<double>> ahat(static_cast<std::size_t>(na));
    std::vector<std::complex<double>> chat(static_cast<std::size_t>(nc));
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < in_ch_; ++i)
      fft2(a.col(col).data() + i * bins_, ahat.data() + i * bins_);
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < out_ch_; ++j)
      fft2(c.col(col).data() + j * bins_, chat.data() + j * bins_);

    // Per bin: yhat = inv(I + D^H D) (ahat + D^H chat); zhat = D yhat.
    std::vector<std::complex<double>> yhat(static_cast<std::size_t>(na));
    std::vector<std::complex<double>> zhat(static_cast<std::size_t>(nc));
#pragma omp parallel for schedule(static)
    for (std::int64_t f = 0; f < bins_; ++f) {
      Eigen::VectorXcd av(in_ch_), cv(out_ch_);
      for (std::int64_t i = 0; i < in_ch_; ++i) av[i] = ahat[static_cast<std::size_t>(i * bins_ + f)];
      for (std::int64_t j = 0; j < out_ch_; ++j) cv[j] = chat[static_cast<std::size_t>(j * bins_ + f)];
      Eigen::MatrixXcd Df = mixing_block(f);
      Eigen::VectorXcd rhs = av + Df.adjoint() * cv;
      Eigen::VectorXcd yv = inverse_block(f) * rhs;
      Eigen::VectorXcd zv = Df * yv;
      for (std::int64_t i = 0; i < in_ch_; ++i) yhat[static_cast<std::size_t>(i * bins_ + f)] = yv[i];
      for (std::int64_t j = 0; j < out_ch_; ++j) zhat[static_cast<std::size_t>(j * bins_ + f)] = zv[j];
    }

    double imag_peak = 0.0;
    for (std::int64_t i = 0; i < in_ch_; ++i)
      ifft2(yhat.data() + i * bins_, y.col(col).data() + i * bins_, &imag_peak);
    for (std::int64_t j = 0; j < out_ch_; ++j)
      ifft2(zhat.data() + j * bins_, z.col(col).data() + j * bins_, &imag_peak);
    max_imag_residue_ = std::max(max_imag_residue_, imag_peak);
  }
}

std::shared_ptr<FourierConvCache> build_fourier_cache(const Layer& layer) {
  return std::make_shared<FourierConvCache>(layer);
}

void project_circ_graph(const Eigen::MatrixXd& a, const Eigen::MatrixXd& c,
                        const FourierConvCache& cache, Eigen::MatrixXd& y,
                        Eigen::MatrixXd& z) {
  cache.project(a, c, y, z);
}

}  // namespace splitcert
