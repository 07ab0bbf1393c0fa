#include "morphdet/contrastive.hpp"

#include <algorithm>
#include <stdexcept>

namespace morphdet {

namespace {

void check_args(double d, int y_g, double margin) {
    if (d < 0.0) throw std::invalid_argument("contrastive loss: distance must be >= 0");
    if (margin <= 0.0) throw std::invalid_argument("contrastive loss: margin must be > 0");
    if (y_g != 0 && y_g != 1) throw std::invalid_argument("contrastive loss: label must be 0 or 1");
}

}  // namespace

double contrastive_loss(double d, int y_g, double margin) {
    check_args(d, y_g, margin);
    if (y_g == 0) return d * d;
    const double gap = std::max(0.0, margin - d);
    return gap * gap;
}

double contrastive_loss_gradient(double d, int y_g, double margin) {
    check_args(d, y_g, margin);
    if (y_g == 0) return 2.0 * d;
    return d < margin ? -2.0 * (margin - d) : 0.0;
}

}  // namespace morphdet
