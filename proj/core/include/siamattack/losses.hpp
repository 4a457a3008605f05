#pragma once

#include <string>
#include <vector>

#include "siamattack/geometry.hpp"
#include "siamattack/tracker.hpp"

namespace siam {

// Objectives for perturbation-generator training. Margins and the fooling
// terms act on raw logits and raw log-scale size offsets; with probabilities
// a margin of -5 could never bind.
struct LossConfig {
    float tau = 0.5f;  // clean foreground probability threshold for selection
    float margin_cls = -5.0f;
    float margin_w = -5.0f;
    float margin_h = -5.0f;
    float lambda1 = 0.1f;  // fooling, classification term
    float lambda2 = 1.0f;  // fooling, size-shrink term
    float lambda3 = 0.1f;  // shift, classification term
    float lambda4 = 1.0f;  // shift, regression term
    float lambda5 = 500.0f;  // perceptibility
    int shift_d = 4;          // cells directly below center (untargeted)
    float target_box_side = 64.0f;
    bool fool_cls = true, fool_reg = true;  // ablation toggles
    bool shift_cls = true, shift_reg = true;
    bool top1_fallback = true;       // selection fallback when nothing clears tau
    bool mean_over_selected = false;  // plain sum matches the objective; mean is a knob

    void validate() const;
    std::string to_json() const;
    static LossConfig from_json(const std::string& json);
};

// Anchors the clean tracker considers foreground: flat indices (k*S+i)*S+j
// with clean fg probability > tau; falls back to the single most confident
// anchor when enabled and the set is empty.
std::vector<int> select_anchors(const ScoreMaps& clean, const LossConfig& cfg);

// Pushes selected anchors toward background and their boxes toward collapse:
//   lambda1 * sum_J max(f_j - b_j, margin_cls)
// + lambda2 * sum_J (max(dw_j, margin_w) + max(dh_j, margin_h))
ag::Var fool_loss(const ScoreMaps& clean, const ScoreMapsVar& adv, const LossConfig& cfg);

// Same with a precomputed selection (training caches these per search crop).
ag::Var fool_loss_selected(const std::vector<int>& selected, const ScoreMapsVar& adv,
                           const LossConfig& cfg);

// Attracts the prediction to a box of side target_box_side centered shift_d
// cells directly below the grid center:
//   lambda3 * NLL_fg(t,k) + lambda4 * L1(reg(t,k), r*)
ag::Var shift_loss_untargeted(const ScoreMapsVar& adv, const AnchorGrid& grid,
                              const LossConfig& cfg);

// Attracts the prediction to an arbitrary target box inside the region.
ag::Var shift_loss_targeted(const ScoreMapsVar& adv, const AnchorGrid& grid,
                            const Box& target_box, const LossConfig& cfg);

// lambda5 * mean((clean - adv)^2), adv already clipped.
ag::Var perceptibility_loss(const ag::Var& adv_search, const Tensor& clean_search,
                            const LossConfig& cfg);

// Sum of the given parts (empty -> 0).
ag::Var total_loss(const std::vector<ag::Var>& parts);

}  // namespace siam
