#include "mcevit/tensor.hpp"

namespace mcevit {

bool& no_grad_flag() {
  static thread_local bool flag = false;
  return flag;
}

}  // namespace mcevit
