#pragma once

#include <vector>

#include "sgsr/discriminators.hpp"
#include "sgsr/gradient_map.hpp"
#include "sgsr/image.hpp"
#include "sgsr/perceptual.hpp"

namespace sgsr {

struct LossWeights {
  double lambda_adv = 0.005;
  double lambda_per = 0.001;
  double lambda_pix = 0.01;
  double lambda_gm = 0.01;
  double lambda_gb = 0.5;
  double lambda_fm = 1.0;

  void validate() const;
};

// All expectations are arithmetic means over batch (and pixels for maps).

// mean(max(0, 1 - real)) + mean(max(0, 1 + fake)).
template <typename T>
Tensor<T> hinge_disc_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits);

// Hinge term for logits that should all read "fake": mean(max(0, 1 + fake)).
template <typename T>
Tensor<T> hinge_fake_loss(const Tensor<T>& fake_logits);

// -(mean(enc) + mean(dec)). `dec_logits` may be undefined (encoder-only critic).
template <typename T>
Tensor<T> gen_adv_loss_u(const Tensor<T>& enc_logit_fake, const Tensor<T>& dec_logits_fake);

template <typename T>
struct CutMixTerms {
  Tensor<T> consistency;      // pixel-mean squared commutation error
  Tensor<T> mixed_enc_logit;  // encoder logit of the mixed image (scored as fake)
};

// Consistency from already-computed decoder maps.
template <typename T>
Tensor<T> cutmix_consistency(const Tensor<T>& dec_mixed, const Tensor<T>& dec_real, const Tensor<T>& dec_fake,
                             const CutMixMask& mask);

template <typename T>
CutMixTerms<T> cutmix_consistency_loss(const UNetDiscriminator<T>& d, const Tensor<T>& hr, const Tensor<T>& sr,
                                       const CutMixMask& mask);

template <typename T>
Tensor<T> lpips_loss(const PerceptualNet<T>& net, const Tensor<T>& sr, const Tensor<T>& hr);

// Mean over blocks of the element-mean L1 distance; hr features are detached.
template <typename T>
Tensor<T> feature_matching_loss(const std::vector<Tensor<T>>& feat_sr, const std::vector<Tensor<T>>& feat_hr);

template <typename T>
struct GradientLosses {
  Tensor<T> gm_pix;  // mean |M(sr) - M(hr)|
  Tensor<T> gb_pix;  // mean |gb_map - M(hr)|
};

template <typename T>
GradientLosses<T> gradient_losses(const Tensor<T>& sr, const Tensor<T>& hr, const Tensor<T>& gb_map,
                                  const GradientMapOptions& options = {});

// Standard (non-saturating) sigmoid objective on D_GM logits:
//   disc = -mean(log(1 - sigmoid(sr))) - mean(log sigmoid(hr))
//   gen  = -mean(log sigmoid(sr))
// With `relativistic`, each logit is replaced by its difference to the other
// side's batch mean, and gen also gets the mirrored real term.
template <typename T>
Tensor<T> gm_disc_loss(const Tensor<T>& logits_sr, const Tensor<T>& logits_hr, bool relativistic = false);
template <typename T>
Tensor<T> gm_gen_loss(const Tensor<T>& logits_sr, const Tensor<T>& logits_hr, bool relativistic = false);

template <typename T>
struct GMAdversarial {
  Tensor<T> disc_loss;
  Tensor<T> gen_loss;
};

// m_sr carries generator gradients; disc_loss sees it detached.
template <typename T>
GMAdversarial<T> gm_adversarial(const GradientMapDiscriminator<T>& d_gm, const Tensor<T>& m_sr,
                                const Tensor<T>& m_hr, bool relativistic = false);

template <typename T>
Tensor<T> pixel_loss(const Tensor<T>& sr, const Tensor<T>& hr);

template <typename T>
struct GeneratorLossParts {
  Tensor<T> adv_u;
  Tensor<T> per;
  Tensor<T> fm;
  Tensor<T> pix;
  Tensor<T> gm_adv;
  Tensor<T> gm_pix;
  Tensor<T> gb_pix;
};

// lambda_adv*adv_u + lambda_per*per + lambda_fm*fm + lambda_pix*pix
//   + lambda_adv*gm_adv + lambda_gm*gm_pix + lambda_gb*gb_pix
template <typename T>
Tensor<T> total_generator_loss(const GeneratorLossParts<T>& parts, const LossWeights& w);

}  // namespace sgsr
