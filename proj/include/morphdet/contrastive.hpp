#pragma once

namespace morphdet {

// L = (1-y) d^2 + y max(0, m-d)^2, with y in {0,1}, margin m > 0, d >= 0.
double contrastive_loss(double d, int y_g, double margin);

// dL/dd. At the hinge kink (d == m, y == 1) the subgradient 0 is chosen.
double contrastive_loss_gradient(double d, int y_g, double margin);

}  // namespace morphdet
