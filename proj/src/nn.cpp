#include "rsscm/nn.hpp"

namespace rsscm::nn {

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kRelu: return "relu";
    case Activation::kSoftmax: return "softmax";
    case Activation::kGroupSoftmax: return "group_softmax";
  }
  return "";
}

Activation parse_activation(const std::string& name) {
  for (Activation a : {Activation::kIdentity, Activation::kSigmoid, Activation::kRelu,
                       Activation::kSoftmax, Activation::kGroupSoftmax}) {
    if (activation_name(a) == name) return a;
  }
  throw std::invalid_argument("unknown activation " + name);
}

}  // namespace rsscm::nn
