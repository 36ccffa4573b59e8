#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rcache {

// Every error carries a stable machine-readable kind; the CLI reports it in
// its error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    [[nodiscard]] const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class InvalidArgument : public Error {
public:
    explicit InvalidArgument(const std::string& message) : Error("InvalidArgument", message) {}
};

// backend

class BackendUnreachable : public Error {
public:
    explicit BackendUnreachable(const std::string& message) : Error("BackendUnreachable", message) {}
};

class BackendRejected : public Error {
public:
    BackendRejected(int status, std::string body)
        : Error("BackendRejected", "backend rejected request with status " + std::to_string(status) + ": " + body),
          status_(status),
          body_(std::move(body)) {}

    [[nodiscard]] int status() const noexcept { return status_; }
    [[nodiscard]] const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

class BudgetRejected : public Error {
public:
    explicit BudgetRejected(const std::string& message) : Error("BudgetRejected", message) {}
};

class ScriptExhausted : public Error {
public:
    explicit ScriptExhausted(const std::string& message) : Error("ScriptExhausted", message) {}
};

class ReplayMiss : public Error {
public:
    explicit ReplayMiss(const std::string& hash) : Error("ReplayMiss", "no cached completion for request " + hash) {}
};

class BackendNoContinuationSupport : public Error {
public:
    explicit BackendNoContinuationSupport(const std::string& message)
        : Error("BackendNoContinuationSupport", message) {}
};

// decoders

// A backend failure inside a multi-turn decoder, tagged with the 1-based turn.
class TurnFailed : public Error {
public:
    TurnFailed(int turn, const Error& cause)
        : Error(cause.kind(), "turn " + std::to_string(turn) + ": " + cause.what()), turn_(turn) {}

    [[nodiscard]] int turn() const noexcept { return turn_; }

private:
    int turn_;
};

// grpo / evaluator

class GroupTooSmall : public Error {
public:
    explicit GroupTooSmall(std::size_t size)
        : Error("GroupTooSmall", "GRPO group needs at least 2 rewards, got " + std::to_string(size)) {}
};

class KExceedsN : public Error {
public:
    KExceedsN(int k, int n)
        : Error("KExceedsN", "k=" + std::to_string(k) + " exceeds n=" + std::to_string(n)) {}
};

// replay

class NoEntry : public Error {
public:
    explicit NoEntry(const std::string& problem_id)
        : Error("NoEntry", "replay buffer has no entry for problem '" + problem_id + "'") {}
};

class CorruptBuffer : public Error {
public:
    CorruptBuffer(std::size_t line, const std::string& detail)
        : Error("CorruptBuffer", "corrupt replay buffer at line " + std::to_string(line) + ": " + detail),
          line_(line) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("IoError", message) {}
};

class MalformedRunDir : public Error {
public:
    explicit MalformedRunDir(const std::string& message) : Error("MalformedRunDir", message) {}
};

}  // namespace rcache
