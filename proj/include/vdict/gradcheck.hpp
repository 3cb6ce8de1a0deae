#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "vdict/neural.hpp"

namespace vdict {

/// Analytic versus central-difference gradient agreement for one tensor.
struct TensorGradCheck {
  std::string name;
  double recog_rel_error = 0.0;
  double itc_rel_error = 0.0;
  double recog_grad_norm = 0.0;  // of the finite-difference estimate
  double itc_grad_norm = 0.0;
};

/// Compares the analytic gradients of the summed recognition loss and of the
/// contrastive loss with central differences, for every parameter tensor.
/// The relative error is ||a - fd|| / max(||a||, ||fd||, 1e-8). Intended for
/// small dimensions: the cost is two forward passes per scalar parameter.
inline std::vector<TensorGradCheck> check_gradients(const ModelParams& params, const std::vector<GlyphImage>& images,
                                                    const ItcBatch& batch, double tau, double step = 1e-5) {
  ModelParams p = params;
  ModelParams g_itc = ModelParams::zeros(p.dims);
  ModelParams g_rec = ModelParams::zeros(p.dims);
  itc_loss(p, batch, tau, &g_itc);
  for (std::size_t k = 0; k < images.size(); ++k) recognition_loss_and_grad(p, images[k], batch.texts[k], 1.0, g_rec);

  auto losses = [&] {
    double rec = 0.0;
    for (std::size_t k = 0; k < images.size(); ++k) rec += recognition_loss(recognize(p, images[k]).dist, batch.texts[k]);
    return std::pair{rec, itc_loss(p, batch, tau).loss};
  };
  auto rel = [](const Matrix& a, const Matrix& b) {
    return (a - b).norm() / std::max({a.norm(), b.norm(), 1e-8});
  };

  std::vector<const Matrix*> analytic_itc, analytic_rec;
  g_itc.for_each([&](const std::string&, ParamGroup, const Matrix& m) { analytic_itc.push_back(&m); });
  g_rec.for_each([&](const std::string&, ParamGroup, const Matrix& m) { analytic_rec.push_back(&m); });

  std::vector<TensorGradCheck> out;
  std::size_t t = 0;
  p.for_each([&](const std::string& name, ParamGroup, Matrix& m) {
    Matrix fd_rec = Matrix::Zero(m.rows(), m.cols());
    Matrix fd_itc = fd_rec;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double orig = m.data()[i];
      m.data()[i] = orig + step;
      const auto [rp, ip] = losses();
      m.data()[i] = orig - step;
      const auto [rm, im] = losses();
      m.data()[i] = orig;
      fd_rec.data()[i] = (rp - rm) / (2 * step);
      fd_itc.data()[i] = (ip - im) / (2 * step);
    }
    out.push_back({name, rel(*analytic_rec[t], fd_rec), rel(*analytic_itc[t], fd_itc), fd_rec.norm(), fd_itc.norm()});
    ++t;
  });
  return out;
}

}  // namespace vdict
