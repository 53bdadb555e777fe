#include "climdiff/nn/autograd.hpp"

#include <iostream>
#include <unordered_set>

namespace climdiff::nn {

namespace {
thread_local bool grad_enabled = true;
}

bool GradMode::enabled() noexcept { return grad_enabled; }
void GradMode::set_enabled(bool on) noexcept { grad_enabled = on; }

template <class T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().numel() != 1) fail(ErrorKind::Shape, "backward requires a scalar loss");
  if (!loss.requires_grad()) {
    std::cerr << "warning: backward called on a loss that is not connected to any parameter\n";
    return;
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->ensure_grad().fill(T(0));
  }
  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace climdiff::nn
