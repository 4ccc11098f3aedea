#include "prnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace prnet {

double grad_check(const std::function<Tensor(Graph&)>& f, Tensor x, double eps) {
    if (!x.defined()) {
        throw std::invalid_argument("grad_check: x is undefined");
    }
    if (x.dtype() != DType::f64) {
        throw std::invalid_argument("grad_check: x must be f64, got " +
                                    std::string(dtype_name(x.dtype())));
    }
    if (!(eps > 0.0)) {
        throw std::invalid_argument("grad_check: eps must be positive");
    }

    const bool had_grad_flag = x.requires_grad();
    x.set_requires_grad(true);
    x.zero_grad();

    Graph g;
    Tensor loss = f(g);
    if (loss.size() != 1) {
        throw std::invalid_argument("grad_check: f must return a scalar, got shape " +
                                    shape_str(loss.shape()));
    }
    g.backward(loss);
    const std::vector<double> analytic = x.grad_to_vector();

    double worst = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double v = x.item_at(i);
        x.set_item(i, v + eps);
        Graph plus(false);
        const double fp = f(plus).item();
        x.set_item(i, v - eps);
        Graph minus(false);
        const double fm = f(minus).item();
        x.set_item(i, v);
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic[static_cast<std::size_t>(i)];
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        worst = std::max(worst, err);
    }

    x.set_requires_grad(had_grad_flag);
    return worst;
}

}  // namespace prnet
