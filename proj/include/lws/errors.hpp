#pragma once

#include <stdexcept>
#include <string>

namespace lws {

// Raised when a corpus or validation slice is too small for the request.
struct insufficient_data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised by the budget equalizer when no scale factor in range reaches the
// target count; carries the closest count that was achieved.
struct infeasible_budget_error : std::runtime_error {
    long long best_count;
    infeasible_budget_error(const std::string& msg, long long best)
        : std::runtime_error(msg), best_count(best) {}
};

// Raised on non-finite loss or gradients during training.
struct training_divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a variant comparison is requested on unequal budgets.
struct invalid_experiment_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace lws
