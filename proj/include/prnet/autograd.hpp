#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "prnet/tensor.hpp"

namespace prnet {

// Tape of executed ops. Ops append an entry with everything backward needs;
// backward() replays entries in exact reverse execution order, then marks the
// tape consumed. One graph per forward pass; a Tensor/Graph pair is
// single-owner, but independent graphs can live on different threads.
class Graph {
public:
    explicit Graph(bool recording = true);
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return recording_; }
    bool consumed() const { return consumed_; }
    std::size_t num_entries() const { return entries_.size(); }
    std::uint64_t id() const { return id_; }

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards, accumulating
    // into the grad buffer of every requires_grad tensor reached.
    // loss must be a single-element tensor produced by this graph.
    void backward(const Tensor& loss);

    // Internal: called by the op layer after computing `out`.
    void record(const Tensor& out, std::function<void()> backward_fn);

private:
    struct Entry {
        std::shared_ptr<detail::TensorNode> out;
        std::function<void()> backward_fn;
    };
    std::vector<Entry> entries_;
    bool recording_;
    bool consumed_ = false;
    std::uint64_t id_;
};

}  // namespace prnet
