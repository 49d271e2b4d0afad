#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mfhg/fusion.hpp"
#include "mfhg/image.hpp"

namespace mfhg {

// All metrics operate on grayscale conversions; histogram-based metrics use
// 256 uniform bins on [0,1] and natural logarithms with 0*log 0 = 0.

// Mean local structural similarity over 8x8 sliding windows (stride 1),
// C1 = 0.01^2, C2 = 0.03^2 on the [0,1] range.
double ssim(const Image& a, const Image& b);

// Hossny-normalized mutual information:
// 2*[I(A;F)/(H(A)+H(F)) + I(B;F)/(H(B)+H(F))]. A zero-entropy marginal pair
// sets its ratio to 0.
double q_mi(const Image& a, const Image& b, const Image& f);

// Tsallis mutual information of each source with the fused image,
// normalized by the summed Tsallis entropies of the sources.
double q_te(const Image& a, const Image& b, const Image& f, double q = 1.85);

// Nonlinear correlation information entropy of the (A,B,F) triple.
double q_ncie(const Image& a, const Image& b, const Image& f);

// Xydeas-Petrovic edge preservation: Sobel strength/orientation agreement
// mapped through sigmoids and weighted by source edge strength.
double q_g(const Image& a, const Image& b, const Image& f);

// Piella-Heijmans saliency-weighted windowed similarity.
double q_s(const Image& a, const Image& b, const Image& f);

struct MetricReport {
  std::optional<double> ssim;  // only when a reference is available
  double q_mi = 0.0;
  double q_te = 0.0;
  double q_ncie = 0.0;
  double q_g = 0.0;
  double q_s = 0.0;
};

MetricReport evaluate_fusion(const Image& a, const Image& b, const Image& f,
                             const Image* reference = nullptr);

struct BiasRow {
  int pair_id = 0;
  std::string fuser;
  MetricReport metrics;
};

struct BiasStudy {
  std::vector<BiasRow> rows;
  // Per metric: on how many pairs the better Dummy outscored AVERAGE.
  int pairs = 0;
  int dummy_wins_q_mi = 0;
  int dummy_wins_q_te = 0;
  int dummy_wins_q_ncie = 0;
  int dummy_wins_q_g = 0;
  int dummy_wins_q_s = 0;
  std::vector<std::string> biased_metrics;  // dummy wins on more than half
};

// Evaluates every fuser on every pair. When references are given (one per
// pair) the SSIM column is filled against them.
BiasStudy bias_study(const std::vector<SourcePair>& pairs,
                     const std::vector<Fuser>& fusers,
                     const std::vector<Image>* references = nullptr);

void write_metric_csv(std::ostream& out, const std::vector<BiasRow>& rows);

}  // namespace mfhg
