#pragma once

#include <string>

namespace itogen {

// Coefficient-learning schemes.
//   kBase          separate models for X and Z, standard loss
//   kJointBase     one model, Z target centred at the model's own X forecast
//   kInstant       separate models for increment quotients, pre-jump loss
//   kJointInstant  one model, centred quadratic quotient, pre-jump loss
enum class Scheme { kBase, kJointBase, kInstant, kJointInstant };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& name);

inline bool is_joint(Scheme s) {
  return s == Scheme::kJointBase || s == Scheme::kJointInstant;
}
inline bool is_instant(Scheme s) {
  return s == Scheme::kInstant || s == Scheme::kJointInstant;
}

}  // namespace itogen
