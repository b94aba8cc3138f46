#pragma once

// External-service boundary: embedding providers and role-tagged LLM
// clients, with deterministic offline mocks.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "pathforge/error.hpp"
#include "pathforge/text.hpp"

namespace pathforge {

using Vector = std::vector<double>;

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw Error(ErrorKind::DimensionMismatch,
                "vectors of size " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorKind::ZeroVector, "cosine of a zero vector");
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

/// Cosine clamped to [0, 1]; negative similarity counts as no similarity.
inline double clamped_similarity(std::span<const double> u, std::span<const double> v) {
  return std::max(0.0, cosine_similarity(u, v));
}

/// Contract: `embed` returns a unit-norm vector of length `dimension()` and is
/// deterministic per text.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual Vector embed(std::string_view text) const = 0;
};

/// Embeds and checks the returned size against the provider's dimension.
inline Vector embed_checked(const EmbeddingProvider& provider, std::string_view text) {
  Vector v = provider.embed(text);
  if (v.size() != provider.dimension())
    throw Error(ErrorKind::DimensionMismatch, "embedder returned " + std::to_string(v.size()) +
                                                  " values, expected " +
                                                  std::to_string(provider.dimension()));
  return v;
}

/// Hashed bag-of-tokens embedder (each token feeds several signed buckets). Texts are keyed by their normalized form so
/// case and spacing do not change the vector. An override table pins chosen
/// texts to fixed vectors, which lets tests script exact cosines.
class MockEmbedder final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDimension = 64;
  static constexpr int kHashesPerToken = 4;

  MockEmbedder() { script_pair("nuclear atypia", "atypical nuclei", 0.90); }

  static MockEmbedder without_defaults() {
    MockEmbedder m;
    m.overrides_.clear();
    m.next_axis_ = kFirstScriptAxis;
    return m;
  }

  std::size_t dimension() const override { return kDimension; }

  Vector embed(std::string_view text) const override {
    auto key = text::normalize_name(text);
    if (auto it = overrides_.find(key); it != overrides_.end()) return it->second;
    Vector v(kDimension, 0.0);
    auto tokens = text::tokenize(text);
    if (tokens.empty()) {
      v[0] = 1.0;
      return v;
    }
    for (const auto& t : tokens) {
      for (int k = 0; k < kHashesPerToken; ++k) {
        auto h = mix(text::fnv1a64(t) + static_cast<std::uint64_t>(k) * 0x9e3779b97f4a7c15ull);
        auto bucket = static_cast<std::size_t>(h % kDimension);
        v[bucket] += ((h >> 40) & 1u) ? -1.0 : 1.0;
      }
    }
    normalize(v);
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
    return v;
  }

  /// Pins `text` to `v` (normalized). Throws on wrong size or zero vector.
  void set_override(std::string_view text, Vector v) {
    if (v.size() != kDimension)
      throw Error(ErrorKind::DimensionMismatch, "override vector must have " + std::to_string(kDimension) + " entries");
    normalize(v);
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; }))
      throw Error(ErrorKind::ZeroVector, "override vector is zero");
    overrides_[text::normalize_name(text)] = std::move(v);
  }

  /// Pins two texts to fresh orthogonal axes mixed so that their cosine is
  /// exactly `cosine` (up to rounding).
  void script_pair(std::string_view a, std::string_view b, double cosine) {
    if (next_axis_ + 2 > kDimension) throw Error(ErrorKind::InvalidArgument, "override axes exhausted");
    Vector va(kDimension, 0.0), vb(kDimension, 0.0);
    va[next_axis_] = 1.0;
    vb[next_axis_] = cosine;
    vb[next_axis_ + 1] = std::sqrt(std::max(0.0, 1.0 - cosine * cosine));
    next_axis_ += 2;
    overrides_[text::normalize_name(a)] = std::move(va);
    overrides_[text::normalize_name(b)] = std::move(vb);
  }

 private:
  // splitmix64 finalizer; raw FNV low bits collide across whole token families.
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static void normalize(Vector& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    if (n == 0.0) return;
    n = std::sqrt(n);
    for (double& x : v) x /= n;
  }

  std::map<std::string, Vector> overrides_;
  static constexpr std::size_t kFirstScriptAxis = kDimension - 32;
  std::size_t next_axis_ = kFirstScriptAxis;
};

// ---------------------------------------------------------------------------
// LLM clients

enum class Role { Extractor, Generator, Judge };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::Extractor: return "extractor";
    case Role::Generator: return "generator";
    case Role::Judge: return "judge";
  }
  return "unknown";
}

struct ClientConfig {
  Role role = Role::Judge;
  std::string endpoint;
  std::string model_name;
  std::chrono::milliseconds timeout{30000};
  int max_inflight = 4;
};

/// Counting gate bounding concurrent requests. Records the peak for tests.
class InflightGate {
 public:
  explicit InflightGate(int limit) : limit_(limit) {
    if (limit < 1) throw Error(ErrorKind::BadConfig, "max_inflight must be >= 1");
  }

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return current_ < limit_; });
    ++current_;
    peak_ = std::max(peak_, current_);
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --current_;
    }
    cv_.notify_one();
  }

  int limit() const { return limit_; }
  int peak() const {
    std::lock_guard lock(mu_);
    return peak_;
  }

 private:
  int limit_;
  int current_ = 0;
  int peak_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

/// Shareable handle to a text-in/text-out model. Concurrent calls are allowed
/// up to `max_inflight`; implementations override `send`.
class LlmClient {
 public:
  explicit LlmClient(ClientConfig config) : config_(std::move(config)), gate_(config_.max_inflight) {}
  virtual ~LlmClient() = default;
  LlmClient(const LlmClient&) = delete;
  LlmClient& operator=(const LlmClient&) = delete;

  std::string request(std::string_view prompt) {
    if (prompt.empty()) throw Error(ErrorKind::InvalidArgument, "empty prompt");
    gate_.acquire();
    struct Release {
      InflightGate& g;
      ~Release() { g.release(); }
    } release{gate_};
    return send(prompt);
  }

  const ClientConfig& config() const { return config_; }
  Role role() const { return config_.role; }
  int peak_inflight() const { return gate_.peak(); }

 protected:
  virtual std::string send(std::string_view prompt) = 0;

 private:
  ClientConfig config_;
  InflightGate gate_;
};

inline std::string prompt_hash(std::string_view prompt) { return text::hex64(text::fnv1a64(prompt)); }

/// A mock rule inspects a prompt and either answers it or declines.
using MockRule = std::function<std::optional<std::string>(std::string_view prompt)>;

/// Deterministic offline client: fixture replies keyed by prompt hash take
/// precedence, then rules in registration order. An extractor with no match
/// returns an empty extraction; other roles fail with MalformedReply.
class MockLlmClient final : public LlmClient {
 public:
  explicit MockLlmClient(Role role, int max_inflight = 4)
      : LlmClient(ClientConfig{role, "mock://", "mock", std::chrono::milliseconds(0), max_inflight}) {}

  void add_rule(MockRule rule) { rules_.push_back(std::move(rule)); }

  void add_fixture(std::string_view prompt, std::string reply) {
    fixtures_[prompt_hash(prompt)] = std::move(reply);
  }
  void add_fixture_by_hash(std::string hash, std::string reply) { fixtures_[std::move(hash)] = std::move(reply); }

 protected:
  std::string send(std::string_view prompt) override {
    if (auto it = fixtures_.find(prompt_hash(prompt)); it != fixtures_.end()) return it->second;
    for (const auto& rule : rules_)
      if (auto reply = rule(prompt)) return *reply;
    if (role() == Role::Extractor) return R"({"extracted_entities":[]})";
    throw Error(ErrorKind::MalformedReply, "mock " + std::string(to_string(role())) + " has no rule for prompt");
  }

 private:
  std::map<std::string, std::string> fixtures_;
  std::vector<MockRule> rules_;
};

/// Applies `fn` to every item with at most `jobs` worker threads. Results are
/// returned in input order. The first exception (by item index) is rethrown
/// after all workers finish.
template <typename T, typename Fn>
auto parallel_map(std::span<const T> items, Fn&& fn, std::size_t jobs = 1)
    -> std::vector<std::invoke_result_t<Fn&, const T&>> {
  using R = std::invoke_result_t<Fn&, const T&>;
  std::vector<std::optional<R>> slots(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  jobs = std::max<std::size_t>(1, std::min(jobs, items.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      try {
        slots[i].emplace(fn(items[i]));
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < items.size(); i = next++) {
          try {
            slots[i].emplace(fn(items[i]));
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(items.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace pathforge
