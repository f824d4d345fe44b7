#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "esaw/es.hpp"

namespace esaw::dist {

inline constexpr std::uint32_t kProtocolVersion = 1;

// ---------------------------------------------------------------------------
// Byte streams

// Reliable ordered byte stream. Implementations: TCP sockets and an
// in-memory pipe for tests.
class Stream {
 public:
  virtual ~Stream() = default;
  // Blocks for at least one byte; returns 0 on orderly close.
  virtual std::size_t read_some(std::span<std::uint8_t> out) = 0;
  virtual void write_all(std::span<const std::uint8_t> data) = 0;
  // Unblocks pending reads on both ends; idempotent.
  virtual void shutdown() = 0;
};

// Connected in-memory duplex pipe.
std::pair<std::unique_ptr<Stream>, std::unique_ptr<Stream>> make_pipe();

class TcpListener {
 public:
  // Binds 127.0.0.1:port; port 0 picks an ephemeral port.
  explicit TcpListener(std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::unique_ptr<Stream> accept();
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

std::unique_ptr<Stream> tcp_connect(const std::string& host, std::uint16_t port);

// ---------------------------------------------------------------------------
// Wire protocol
//
// Frames are [u32 LE payload length][u8 message type][payload]; all integers
// little-endian, all floats IEEE-754 binary64 little-endian. Only seeds and
// scalar rewards ever cross the wire, so per-round traffic is O(N)
// independent of the parameter count.

enum class MsgType : std::uint8_t {
  Hello = 0x01,       // {u32 protocol_version, u64 generator_version, u64 config_hash, u64 d}
  HelloAck = 0x02,    // {}
  Assign = 0x10,      // {u32 iteration, u32 lo, u32 hi, u64 run_seed, f64 sigma}
  EvalResult = 0x11,  // {u32 iteration, u32 member_index, f64 reward}
  Commit = 0x20,      // {u32 iteration, u32 N, N x f64 rewards in member order}
  Abort = 0x30,       // {u32 iteration, u32 reason_code}
  Bye = 0x40,         // {}
};

enum class AbortReason : std::uint32_t {
  WorkerTimeout = 1,
  ProtocolViolation = 2,
  ConfigMismatch = 3,
  Shutdown = 4,
};

struct Frame {
  MsgType type;
  std::vector<std::uint8_t> payload;
};

// Returns nullopt on orderly close at a frame boundary; a partial frame is a
// protocol error.
std::optional<Frame> read_frame(Stream& stream);
// Returns the total frame size in bytes (4 + 1 + payload).
std::size_t write_frame(Stream& stream, MsgType type, std::span<const std::uint8_t> payload);

struct HelloMsg {
  std::uint32_t protocol_version = kProtocolVersion;
  std::uint64_t generator_version = kGeneratorVersion;
  std::uint64_t config_hash = 0;
  std::uint64_t d = 0;
};

// Contiguous member range [lo, hi) of one iteration; ranges across workers
// partition [1, N] exactly.
struct AssignMsg {
  std::uint32_t iteration = 0;
  std::uint32_t lo = 1;
  std::uint32_t hi = 1;
  std::uint64_t run_seed = 0;
  double sigma = 0.0;
};

struct EvalResultMsg {
  std::uint32_t iteration = 0;
  std::uint32_t member_index = 0;
  double reward = 0.0;
};

// All N raw rewards of one iteration, ordered by member index. Raw (not
// normalized) so that every node runs the identical z-scaling code path.
struct CommitMsg {
  std::uint32_t iteration = 0;
  std::vector<double> rewards;
};

struct AbortMsg {
  std::uint32_t iteration = 0;
  std::uint32_t reason = 0;
};

std::vector<std::uint8_t> encode(const HelloMsg&);
std::vector<std::uint8_t> encode(const AssignMsg&);
std::vector<std::uint8_t> encode(const EvalResultMsg&);
std::vector<std::uint8_t> encode(const CommitMsg&);
std::vector<std::uint8_t> encode(const AbortMsg&);
HelloMsg decode_hello(std::span<const std::uint8_t>);
AssignMsg decode_assign(std::span<const std::uint8_t>);
EvalResultMsg decode_eval_result(std::span<const std::uint8_t>);
CommitMsg decode_commit(std::span<const std::uint8_t>);
AbortMsg decode_abort(std::span<const std::uint8_t>);

// ---------------------------------------------------------------------------
// Evaluation backends

// theta + sigma * eps(key); the one perturbation routine every backend uses,
// so rewards are bit-identical wherever a member is evaluated.
ParameterVector perturbed_params(const ParameterVector& theta, const NoiseKey& key,
                                 double sigma);

// In-process backend. Member results are stored by index, so the record list
// is bit-identical for any thread count.
class LocalPoolEvaluator final : public PopulationEvaluator {
 public:
  explicit LocalPoolEvaluator(unsigned threads = 1);

  std::vector<double> evaluate(const ParameterVector& theta, std::uint32_t iteration,
                               const EsConfig& cfg, const RewardFn& reward_fn) override;

  unsigned threads() const { return threads_; }

 private:
  unsigned threads_;
};

// Coordinator of the seed-synchronization protocol. Owns the worker
// connections; each round it partitions members, collects rewards, and
// broadcasts the complete reward set. It never ships parameters: every node
// reconstructs perturbations from keys and applies the identical update.
class MasterSession final : public PopulationEvaluator {
 public:
  MasterSession(std::uint64_t config_hash, std::uint64_t d,
                std::chrono::milliseconds worker_timeout = std::chrono::seconds(60));
  ~MasterSession() override;
  MasterSession(const MasterSession&) = delete;
  MasterSession& operator=(const MasterSession&) = delete;

  // Blocking HELLO handshake; rejects mismatched config hash, generator or
  // protocol version.
  void attach_worker(std::unique_ptr<Stream> stream);

  std::size_t worker_count() const { return workers_.size(); }

  // Runs one full round; aborts (and throws ProtocolError listing missing
  // members) on worker timeout or inconsistency.
  std::vector<double> master_round(std::uint32_t iteration, const EsConfig& cfg);

  std::vector<double> evaluate(const ParameterVector& theta, std::uint32_t iteration,
                               const EsConfig& cfg, const RewardFn& reward_fn) override;

  // Orderly BYE to all workers.
  void shutdown();

  // Size in bytes of the most recent COMMIT frame (independent of d).
  std::size_t last_commit_frame_bytes() const { return last_commit_frame_bytes_; }

 private:
  struct Worker {
    std::unique_ptr<Stream> stream;
    std::thread reader;
    std::uint32_t lo = 1, hi = 1;
    bool alive = true;
  };

  void reader_loop(Worker& worker);
  void abort_round_locked(std::uint32_t iteration, AbortReason reason);

  std::uint64_t config_hash_;
  std::uint64_t d_;
  std::chrono::milliseconds worker_timeout_;

  std::vector<std::unique_ptr<Worker>> workers_;
  std::size_t last_commit_frame_bytes_ = 0;
  bool shut_down_ = false;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  // Round state, guarded by mu_.
  std::uint32_t round_iteration_ = 0;
  bool round_active_ = false;
  std::vector<std::optional<double>> round_rewards_;
  std::size_t round_received_ = 0;
  std::string round_error_;
};

// ---------------------------------------------------------------------------
// Worker

struct WorkerContext {
  EsConfig cfg;
  ParameterVector theta;   // starts at theta0
  ParameterVector anchor;  // frozen theta0
  const RewardFn* reward_fn = nullptr;
  std::uint64_t config_hash = 0;
};

// Runs the worker side until BYE: evaluates assigned member ranges, replies
// scalar rewards, and applies every committed update locally so its theta
// stays synchronized with the master without parameter transfer. Returns the
// final theta.
ParameterVector worker_loop(Stream& stream, WorkerContext ctx);

}  // namespace esaw::dist
