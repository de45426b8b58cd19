#include "terrembed/error.hpp"
#include "terrembed/log.hpp"
#include "terrembed/parallel.hpp"
#include "terrembed/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iostream>
#include <limits>
#include <mutex>
#include <numbers>
#include <thread>
#include <vector>

namespace terrembed {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::parse: return "parse error";
        case ErrorKind::dimension: return "dimension error";
        case ErrorKind::configuration: return "configuration error";
        case ErrorKind::format: return "format error";
        case ErrorKind::unsupported_version: return "unsupported version";
        case ErrorKind::state: return "state error";
        case ErrorKind::validation: return "validation error";
        case ErrorKind::degenerate: return "degenerate input";
        case ErrorKind::schema: return "schema error";
        case ErrorKind::missing_input: return "missing input";
        case ErrorKind::io: return "i/o error";
        case ErrorKind::runtime: return "runtime error";
    }
    return "error";
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) {
        return lo;
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) {
        return static_cast<std::int64_t>(next_u64());
    }
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t draw = next_u64();
    while (draw >= limit) {
        draw = next_u64();
    }
    return lo + static_cast<std::int64_t>(draw % span);
}

double Rng::log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::weighted_index(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        total += w;
    }
    const double target = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) {
            continue;
        }
        acc += weights[i];
        last_positive = i;
        if (target < acc) {
            return i;
        }
    }
    return last_positive;
}

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned count) { g_threads = count; }

unsigned thread_count() {
    const unsigned requested = g_threads.load();
    if (requested != 0) {
        return requested;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Nested calls run inline on the calling worker.
static thread_local bool in_parallel_region = false;

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = in_parallel_region ? 1 : std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            in_parallel_region = true;
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                }
            }
        });
    }
    pool.clear();
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

namespace log {

namespace {
std::atomic<Level> g_level{Level::info};
std::mutex g_log_mutex;
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void write(Level lvl, std::string_view message) {
    if (lvl < g_level.load()) {
        return;
    }
    static constexpr const char* names[] = {"debug", "info", "warn", "error"};
    std::lock_guard lock(g_log_mutex);
    std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << message << '\n';
}

}  // namespace log

}  // namespace terrembed
