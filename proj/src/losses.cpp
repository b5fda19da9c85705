#include "s2e/losses.hpp"

namespace s2e {

const char* to_string(Objective objective) {
  switch (objective) {
    case Objective::gan_eq1: return "gan_eq1";
    case Objective::cgan_eq2: return "cgan_eq2";
    case Objective::pix2pix_eq3: return "pix2pix_eq3";
    case Objective::multicond_eq4: return "multicond_eq4";
  }
  return "?";
}

Objective parse_objective(std::string_view text) {
  for (auto o : {Objective::gan_eq1, Objective::cgan_eq2, Objective::pix2pix_eq3,
                 Objective::multicond_eq4}) {
    if (text == to_string(o)) return o;
  }
  fail(ErrorKind::config, "unknown objective '" + std::string(text) + "'");
}

const char* to_string(AdversarialForm form) {
  return form == AdversarialForm::log_sigmoid ? "log_sigmoid" : "least_squares";
}

AdversarialForm parse_adversarial_form(std::string_view text) {
  if (text == "log_sigmoid") return AdversarialForm::log_sigmoid;
  if (text == "least_squares") return AdversarialForm::least_squares;
  fail(ErrorKind::config, "unknown adversarial form '" + std::string(text) + "'");
}

void LossConfig::validate(const Conditioning& conditioning) const {
  if (!(lambda_fm >= 0.0) || !std::isfinite(lambda_fm)) {
    fail(ErrorKind::config, "lambda_fm must be finite and >= 0");
  }
  if (objective == Objective::multicond_eq4 && conditioning.empty()) {
    fail(ErrorKind::config, "multicond_eq4 requires at least one conditioning modality");
  }
  if (objective != Objective::multicond_eq4 && !conditioning.empty()) {
    fail(ErrorKind::config, std::string(to_string(objective)) +
                                " conditions on the SAR input only; drop the extra modalities");
  }
}

Objective default_objective(const Conditioning& conditioning) {
  return conditioning.empty() ? Objective::pix2pix_eq3 : Objective::multicond_eq4;
}

int generator_input_channels(Objective, int sar_channels, const Conditioning& conditioning) {
  return sar_channels + conditioning_channels(conditioning);
}

int discriminator_input_channels(Objective objective, int sar_channels,
                                 const Conditioning& conditioning) {
  if (objective == Objective::gan_eq1) return 3;
  return sar_channels + conditioning_channels(conditioning) + 3;
}

}  // namespace s2e
