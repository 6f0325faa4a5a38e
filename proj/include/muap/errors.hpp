#pragma once

#include <stdexcept>
#include <string>

namespace muap {

// File / wire format problems. The `issue` code distinguishes the failure
// classes that callers are expected to branch on.
enum class FormatIssue {
    bad_magic,
    truncated,
    version_mismatch,
    bad_header,
};

class FormatError : public std::runtime_error {
public:
    FormatError(FormatIssue issue, const std::string& what)
        : std::runtime_error(what), issue_(issue) {}

    FormatIssue issue() const { return issue_; }

private:
    FormatIssue issue_;
};

// Embedding with vanishing pre-normalization norm.
class DegenerateEmbeddingError : public std::runtime_error {
public:
    explicit DegenerateEmbeddingError(const std::string& what)
        : std::runtime_error(what) {}
};

// Training loss became non-finite; carries the epoch where it happened.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(int epoch, const std::string& what)
        : std::runtime_error(what), epoch_(epoch) {}

    int epoch() const { return epoch_; }

private:
    int epoch_;
};

}  // namespace muap
