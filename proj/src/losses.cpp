#include "sgsr/losses.hpp"

#include <stdexcept>

namespace sgsr {

void LossWeights::validate() const {
  for (double w : {lambda_adv, lambda_per, lambda_pix, lambda_gm, lambda_gb, lambda_fm}) {
    if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  }
}

namespace {

template <typename T>
void same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// (N, 1) tensor holding mean(x) in every row, differentiable.
template <typename T>
Tensor<T> broadcast_mean(const Tensor<T>& x, int64_t rows) {
  const Tensor<T> m = mean(x);
  return reshape(concat(std::vector<Tensor<T>>(rows, m), 0), {rows, 1});
}

}  // namespace

template <typename T>
Tensor<T> hinge_fake_loss(const Tensor<T>& fake_logits) {
  return mean(relu(add_scalar(fake_logits, T(1))));
}

template <typename T>
Tensor<T> hinge_disc_loss(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  same_shape(real_logits, fake_logits, "hinge_disc_loss");
  const Tensor<T> real_term = mean(relu(add_scalar(mul_scalar(real_logits, T(-1)), T(1))));
  return add(real_term, hinge_fake_loss(fake_logits));
}

template <typename T>
Tensor<T> gen_adv_loss_u(const Tensor<T>& enc_logit_fake, const Tensor<T>& dec_logits_fake) {
  Tensor<T> s = mean(enc_logit_fake);
  if (dec_logits_fake.defined()) s = add(s, mean(dec_logits_fake));
  return mul_scalar(s, T(-1));
}

template <typename T>
Tensor<T> cutmix_consistency(const Tensor<T>& dec_mixed, const Tensor<T>& dec_real, const Tensor<T>& dec_fake,
                             const CutMixMask& mask) {
  same_shape(dec_real, dec_fake, "cutmix_consistency");
  same_shape(dec_mixed, dec_real, "cutmix_consistency");
  return mse(dec_mixed, cutmix(dec_real, dec_fake, mask));
}

template <typename T>
CutMixTerms<T> cutmix_consistency_loss(const UNetDiscriminator<T>& d, const Tensor<T>& hr, const Tensor<T>& sr,
                                       const CutMixMask& mask) {
  same_shape(hr, sr, "cutmix_consistency_loss");
  const auto mixed = d.forward(cutmix(hr, sr, mask));
  CutMixTerms<T> terms;
  terms.consistency = cutmix_consistency(mixed.dec_logits, d.decode(hr), d.decode(sr), mask);
  terms.mixed_enc_logit = mixed.enc_logit;
  return terms;
}

template <typename T>
Tensor<T> lpips_loss(const PerceptualNet<T>& net, const Tensor<T>& sr, const Tensor<T>& hr) {
  return net.distance(sr, hr);
}

template <typename T>
Tensor<T> feature_matching_loss(const std::vector<Tensor<T>>& feat_sr, const std::vector<Tensor<T>>& feat_hr) {
  if (feat_sr.size() != feat_hr.size() || feat_sr.empty()) {
    throw std::invalid_argument("feature_matching_loss: stack sizes " + std::to_string(feat_sr.size()) + " vs " +
                                std::to_string(feat_hr.size()));
  }
  Tensor<T> total;
  for (size_t l = 0; l < feat_sr.size(); ++l) {
    same_shape(feat_sr[l], feat_hr[l], "feature_matching_loss");
    const Tensor<T> term = l1_mean(feat_sr[l], feat_hr[l].detach());
    total = total.defined() ? add(total, term) : term;
  }
  return mul_scalar(total, T(1) / static_cast<T>(feat_sr.size()));
}

template <typename T>
GradientLosses<T> gradient_losses(const Tensor<T>& sr, const Tensor<T>& hr, const Tensor<T>& gb_map,
                                  const GradientMapOptions& options) {
  same_shape(sr, hr, "gradient_losses");
  const Tensor<T> m_hr = extract_gradient(hr, options).detach();
  same_shape(gb_map, m_hr, "gradient_losses (gb_map)");
  return {l1_mean(extract_gradient(sr, options), m_hr), l1_mean(gb_map, m_hr)};
}

template <typename T>
Tensor<T> gm_disc_loss(const Tensor<T>& logits_sr, const Tensor<T>& logits_hr, bool relativistic) {
  Tensor<T> sr = logits_sr, hr = logits_hr;
  if (relativistic) {
    sr = sub(logits_sr, broadcast_mean(logits_hr, logits_sr.dim(0)));
    hr = sub(logits_hr, broadcast_mean(logits_sr, logits_hr.dim(0)));
  }
  const Tensor<T> fake_term = mean(log_sigmoid(mul_scalar(sr, T(-1))));
  const Tensor<T> real_term = mean(log_sigmoid(hr));
  return mul_scalar(add(fake_term, real_term), T(-1));
}

template <typename T>
Tensor<T> gm_gen_loss(const Tensor<T>& logits_sr, const Tensor<T>& logits_hr, bool relativistic) {
  if (!relativistic) return mul_scalar(mean(log_sigmoid(logits_sr)), T(-1));
  const Tensor<T> sr = sub(logits_sr, broadcast_mean(logits_hr, logits_sr.dim(0)));
  const Tensor<T> hr = sub(logits_hr, broadcast_mean(logits_sr, logits_hr.dim(0)));
  return mul_scalar(add(mean(log_sigmoid(sr)), mean(log_sigmoid(mul_scalar(hr, T(-1))))), T(-1));
}

template <typename T>
GMAdversarial<T> gm_adversarial(const GradientMapDiscriminator<T>& d_gm, const Tensor<T>& m_sr,
                                const Tensor<T>& m_hr, bool relativistic) {
  same_shape(m_sr, m_hr, "gm_adversarial");
  const Tensor<T> hr_logits = d_gm.forward(m_hr.detach());
  GMAdversarial<T> out;
  out.disc_loss = gm_disc_loss(d_gm.forward(m_sr.detach()), hr_logits, relativistic);
  out.gen_loss = gm_gen_loss(d_gm.forward(m_sr), hr_logits.detach(), relativistic);
  return out;
}

template <typename T>
Tensor<T> pixel_loss(const Tensor<T>& sr, const Tensor<T>& hr) {
  same_shape(sr, hr, "pixel_loss");
  return l1_mean(sr, hr);
}

template <typename T>
Tensor<T> total_generator_loss(const GeneratorLossParts<T>& p, const LossWeights& w) {
  w.validate();
  const std::pair<const Tensor<T>*, double> terms[] = {
      {&p.adv_u, w.lambda_adv}, {&p.per, w.lambda_per},    {&p.fm, w.lambda_fm},     {&p.pix, w.lambda_pix},
      {&p.gm_adv, w.lambda_adv}, {&p.gm_pix, w.lambda_gm}, {&p.gb_pix, w.lambda_gb},
  };
  Tensor<T> total;
  for (const auto& [part, weight] : terms) {
    if (!part->defined()) continue;
    const Tensor<T> term = mul_scalar(*part, static_cast<T>(weight));
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined()) throw std::invalid_argument("total_generator_loss: no parts given");
  return total;
}

#define SGSR_INSTANTIATE_LOSSES(T)                                                                               \
  template Tensor<T> hinge_disc_loss(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> hinge_fake_loss(const Tensor<T>&);                                                         \
  template Tensor<T> gen_adv_loss_u(const Tensor<T>&, const Tensor<T>&);                                        \
  template Tensor<T> cutmix_consistency(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const CutMixMask&); \
  template CutMixTerms<T> cutmix_consistency_loss(const UNetDiscriminator<T>&, const Tensor<T>&, const Tensor<T>&, \
                                                  const CutMixMask&);                                           \
  template Tensor<T> lpips_loss(const PerceptualNet<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> feature_matching_loss(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&);       \
  template GradientLosses<T> gradient_losses(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                             const GradientMapOptions&);                                        \
  template Tensor<T> gm_disc_loss(const Tensor<T>&, const Tensor<T>&, bool);                                    \
  template Tensor<T> gm_gen_loss(const Tensor<T>&, const Tensor<T>&, bool);                                     \
  template GMAdversarial<T> gm_adversarial(const GradientMapDiscriminator<T>&, const Tensor<T>&,                \
                                           const Tensor<T>&, bool);                                             \
  template Tensor<T> pixel_loss(const Tensor<T>&, const Tensor<T>&);                                            \
  template Tensor<T> total_generator_loss(const GeneratorLossParts<T>&, const LossWeights&);

SGSR_INSTANTIATE_LOSSES(float)
SGSR_INSTANTIATE_LOSSES(double)

}  // namespace sgsr
