#include "prnet/autograd.hpp"

#include <atomic>
#include <stdexcept>

namespace prnet {

namespace {
std::uint64_t next_graph_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}
}  // namespace

Graph::Graph(bool recording) : recording_(recording), id_(next_graph_id()) {}

void Graph::record(const Tensor& out, std::function<void()> backward_fn) {
    out.node()->producer_graph = id_;
    entries_.push_back({out.node(), std::move(backward_fn)});
}

void Graph::backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw std::invalid_argument("backward: loss must be a single element, got shape " +
                                    shape_str(loss.shape()));
    if (consumed_) throw std::runtime_error("backward: graph already consumed; run a new forward");
    if (loss.node()->producer_graph != id_)
        throw std::runtime_error("backward: loss was not produced by this graph");

    loss.node()->ensure_grad();
    dispatch_dtype(loss.dtype(), [&](auto tag) {
        using T = typename decltype(tag)::type;
        loss.node()->grad_as<T>()[0] = T(1);
    });

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        // Entries whose output never received a gradient are dead branches.
        if (it->out->has_grad()) it->backward_fn();
    }
    consumed_ = true;
}

}  // namespace prnet
