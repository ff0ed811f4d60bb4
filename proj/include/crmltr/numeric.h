#ifndef CRMLTR_NUMERIC_H_
#define CRMLTR_NUMERIC_H_

#include <span>

namespace crmltr {

// Pairwise (cascade) summation in a fixed order. Error grows as O(log n)
// instead of O(n) and the result does not depend on thread count.
double pairwise_sum(std::span<const double> values);

}  // namespace crmltr

#endif  // CRMLTR_NUMERIC_H_
