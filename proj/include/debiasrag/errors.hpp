#ifndef DEBIASRAG_ERRORS_HPP
#define DEBIASRAG_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace debiasrag {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A caller violated a documented precondition or API contract.
class ContractError : public Error {
public:
    using Error::Error;
};

// A remote service call failed after exhausting its retry budget.
class TransportError : public Error {
public:
    TransportError(const std::string& what, int attempts)
        : Error(what + " (after " + std::to_string(attempts) + " attempt" +
                (attempts == 1 ? "" : "s") + ")"),
          attempts_(attempts) {}

    int attempts() const { return attempts_; }

private:
    int attempts_;
};

// Persisted data failed structural validation. Carries the byte offset of
// the first inconsistency.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// The candidate pool ended up empty, leaving nothing to rerank.
class EmptyPoolError : public Error {
public:
    using Error::Error;
};

// Every refine candidate failed to score.
class RefineError : public Error {
public:
    using Error::Error;
};

} // namespace debiasrag

#endif
