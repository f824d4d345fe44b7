#include "esaw/dist.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <deque>
#include <sstream>

#include "esaw/binio.hpp"

namespace esaw::dist {

namespace {

constexpr std::size_t kMaxPayload = 1u << 26;  // 64 MiB sanity cap

void read_exact(Stream& stream, std::span<std::uint8_t> out) {
  std::size_t got = 0;
  while (got < out.size()) {
    const std::size_t n = stream.read_some(out.subspan(got));
    if (n == 0) {
      throw ProtocolError("connection closed mid-frame");
    }
    got += n;
  }
}

}  // namespace

std::optional<Frame> read_frame(Stream& stream) {
  std::uint8_t header[4];
  std::size_t got = 0;
  while (got < 4) {
    const std::size_t n = stream.read_some(std::span<std::uint8_t>(header + got, 4 - got));
    if (n == 0) {
      if (got == 0) {
        return std::nullopt;  // orderly close at a frame boundary
      }
      throw ProtocolError("connection closed mid-frame header");
    }
    got += n;
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) {
    len |= static_cast<std::uint32_t>(header[i]) << (8 * i);
  }
  if (len > kMaxPayload) {
    throw ProtocolError("frame payload too large: " + std::to_string(len));
  }
  Frame frame;
  std::uint8_t type = 0;
  read_exact(stream, std::span<std::uint8_t>(&type, 1));
  frame.type = static_cast<MsgType>(type);
  frame.payload.resize(len);
  if (len > 0) {
    read_exact(stream, frame.payload);
  }
  return frame;
}

std::size_t write_frame(Stream& stream, MsgType type, std::span<const std::uint8_t> payload) {
  std::vector<std::uint8_t> buf;
  buf.reserve(5 + payload.size());
  put_u32(buf, static_cast<std::uint32_t>(payload.size()));
  buf.push_back(static_cast<std::uint8_t>(type));
  buf.insert(buf.end(), payload.begin(), payload.end());
  stream.write_all(buf);
  return buf.size();
}

// ---------------------------------------------------------------------------
// Message codecs

std::vector<std::uint8_t> encode(const HelloMsg& m) {
  std::vector<std::uint8_t> out;
  put_u32(out, m.protocol_version);
  put_u64(out, m.generator_version);
  put_u64(out, m.config_hash);
  put_u64(out, m.d);
  return out;
}

std::vector<std::uint8_t> encode(const AssignMsg& m) {
  std::vector<std::uint8_t> out;
  put_u32(out, m.iteration);
  put_u32(out, m.lo);
  put_u32(out, m.hi);
  put_u64(out, m.run_seed);
  put_f64(out, m.sigma);
  return out;
}

std::vector<std::uint8_t> encode(const EvalResultMsg& m) {
  std::vector<std::uint8_t> out;
  put_u32(out, m.iteration);
  put_u32(out, m.member_index);
  put_f64(out, m.reward);
  return out;
}

std::vector<std::uint8_t> encode(const CommitMsg& m) {
  std::vector<std::uint8_t> out;
  put_u32(out, m.iteration);
  put_u32(out, static_cast<std::uint32_t>(m.rewards.size()));
  for (double r : m.rewards) {
    put_f64(out, r);
  }
  return out;
}

std::vector<std::uint8_t> encode(const AbortMsg& m) {
  std::vector<std::uint8_t> out;
  put_u32(out, m.iteration);
  put_u32(out, m.reason);
  return out;
}

namespace {

BinReader payload_reader(std::span<const std::uint8_t> payload, std::size_t expected,
                         const char* what) {
  if (payload.size() != expected) {
    throw ProtocolError(std::string(what) + ": payload size " + std::to_string(payload.size()) +
                        ", expected " + std::to_string(expected));
  }
  return BinReader(payload);
}

}  // namespace

HelloMsg decode_hello(std::span<const std::uint8_t> payload) {
  BinReader r = payload_reader(payload, 28, "HELLO");
  HelloMsg m;
  m.protocol_version = r.u32();
  m.generator_version = r.u64();
  m.config_hash = r.u64();
  m.d = r.u64();
  return m;
}

AssignMsg decode_assign(std::span<const std::uint8_t> payload) {
  BinReader r = payload_reader(payload, 28, "ASSIGN");
  AssignMsg m;
  m.iteration = r.u32();
  m.lo = r.u32();
  m.hi = r.u32();
  m.run_seed = r.u64();
  m.sigma = r.f64();
  return m;
}

EvalResultMsg decode_eval_result(std::span<const std::uint8_t> payload) {
  BinReader r = payload_reader(payload, 16, "EVAL_RESULT");
  EvalResultMsg m;
  m.iteration = r.u32();
  m.member_index = r.u32();
  m.reward = r.f64();
  return m;
}

CommitMsg decode_commit(std::span<const std::uint8_t> payload) {
  if (payload.size() < 8) {
    throw ProtocolError("COMMIT: payload too short");
  }
  BinReader r{payload};
  CommitMsg m;
  m.iteration = r.u32();
  const std::uint32_t n = r.u32();
  if (payload.size() != 8 + static_cast<std::size_t>(n) * 8) {
    throw ProtocolError("COMMIT: declared N=" + std::to_string(n) + " but payload holds " +
                        std::to_string((payload.size() - 8) / 8) + " rewards");
  }
  m.rewards.resize(n);
  for (double& v : m.rewards) {
    v = r.f64();
  }
  return m;
}

AbortMsg decode_abort(std::span<const std::uint8_t> payload) {
  BinReader r = payload_reader(payload, 8, "ABORT");
  AbortMsg m;
  m.iteration = r.u32();
  m.reason = r.u32();
  return m;
}

// ---------------------------------------------------------------------------
// In-memory pipe

namespace {

struct PipeCore {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::uint8_t> data;
  bool closed = false;
};

class PipeEnd final : public Stream {
 public:
  PipeEnd(std::shared_ptr<PipeCore> in, std::shared_ptr<PipeCore> out)
      : in_(std::move(in)), out_(std::move(out)) {}

  ~PipeEnd() override { PipeEnd::shutdown(); }

  std::size_t read_some(std::span<std::uint8_t> out) override {
    std::unique_lock lock(in_->mu);
    in_->cv.wait(lock, [&] { return !in_->data.empty() || in_->closed; });
    if (in_->data.empty()) {
      return 0;
    }
    const std::size_t n = std::min(out.size(), in_->data.size());
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = in_->data.front();
      in_->data.pop_front();
    }
    return n;
  }

  void write_all(std::span<const std::uint8_t> data) override {
    std::lock_guard lock(out_->mu);
    if (out_->closed) {
      throw IoError("pipe: peer closed");
    }
    out_->data.insert(out_->data.end(), data.begin(), data.end());
    out_->cv.notify_all();
  }

  void shutdown() override {
    for (auto& core : {in_, out_}) {
      std::lock_guard lock(core->mu);
      core->closed = true;
      core->cv.notify_all();
    }
  }

 private:
  std::shared_ptr<PipeCore> in_;
  std::shared_ptr<PipeCore> out_;
};

}  // namespace

std::pair<std::unique_ptr<Stream>, std::unique_ptr<Stream>> make_pipe() {
  auto a = std::make_shared<PipeCore>();
  auto b = std::make_shared<PipeCore>();
  return {std::make_unique<PipeEnd>(a, b), std::make_unique<PipeEnd>(b, a)};
}

// ---------------------------------------------------------------------------
// TCP

namespace {

class TcpStream final : public Stream {
 public:
  explicit TcpStream(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  ~TcpStream() override {
    TcpStream::shutdown();
    if (fd_ >= 0) {
      ::close(fd_);
    }
  }

  std::size_t read_some(std::span<std::uint8_t> out) override {
    while (true) {
      const ssize_t n = ::recv(fd_, out.data(), out.size(), 0);
      if (n >= 0) {
        return static_cast<std::size_t>(n);
      }
      if (errno == EINTR) {
        continue;
      }
      if (errno == ECONNRESET) {
        return 0;
      }
      throw IoError(std::string("recv failed: ") + std::strerror(errno));
    }
  }

  void write_all(std::span<const std::uint8_t> data) override {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) {
          continue;
        }
        throw IoError(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void shutdown() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
    }
  }

 private:
  int fd_;
};

}  // namespace

TcpListener::TcpListener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) {
    throw IoError(std::string("socket failed: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw IoError("bind failed: " + err);
  }
  if (::listen(fd_, 16) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw IoError("listen failed: " + err);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<Stream> TcpListener::accept() {
  while (true) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) {
      return std::make_unique<TcpStream>(fd);
    }
    if (errno == EINTR) {
      continue;
    }
    throw IoError(std::string("accept failed: ") + std::strerror(errno));
  }
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

std::unique_ptr<Stream> tcp_connect(const std::string& host, std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) {
    throw IoError(std::string("socket failed: ") + std::strerror(errno));
  }
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw IoError("invalid IPv4 address: " + host);
  }
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw IoError("connect to " + host + ":" + std::to_string(port) + " failed: " + err);
  }
  return std::make_unique<TcpStream>(fd);
}

// ---------------------------------------------------------------------------
// Local pool backend

ParameterVector perturbed_params(const ParameterVector& theta, const NoiseKey& key,
                                 double sigma) {
  ParameterVector out = theta;
  for_each_normal(key, out.size(), [&](std::size_t i, double eps) { out[i] += sigma * eps; });
  return out;
}

LocalPoolEvaluator::LocalPoolEvaluator(unsigned threads) : threads_(threads) {
  if (threads_ < 1) {
    throw ConfigError("local pool: thread count must be >= 1");
  }
}

std::vector<double> LocalPoolEvaluator::evaluate(const ParameterVector& theta,
                                                 std::uint32_t iteration, const EsConfig& cfg,
                                                 const RewardFn& reward_fn) {
  const std::uint32_t n = cfg.population;
  std::vector<double> rewards(n, 0.0);
  std::vector<std::string> errors(n);
  std::atomic<std::uint32_t> next{1};
  const bool needs_params = reward_fn.needs_params();

  auto run_members = [&] {
    while (true) {
      const std::uint32_t member = next.fetch_add(1);
      if (member > n) {
        return;
      }
      const NoiseKey key{cfg.run_seed, iteration, member};
      double reward = 0.0;
      try {
        if (needs_params) {
          const ParameterVector perturbed = perturbed_params(theta, key, cfg.sigma);
          reward = reward_fn.evaluate_member(perturbed, key);
        } else {
          reward = reward_fn.evaluate_member(theta, key);
        }
        if (!std::isfinite(reward)) {
          throw EvalError("non-finite reward");
        }
      } catch (const std::exception& e) {
        errors[member - 1] = e.what();
        continue;
      }
      rewards[member - 1] = reward;
    }
  };

  const unsigned workers = std::min<unsigned>(threads_, n);
  if (workers <= 1) {
    run_members();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned i = 0; i < workers; ++i) {
      pool.emplace_back(run_members);
    }
    for (std::thread& t : pool) {
      t.join();
    }
  }

  for (std::uint32_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      throw EvalError("member " + std::to_string(i + 1) + ": " + errors[i]);
    }
  }
  return rewards;
}

// ---------------------------------------------------------------------------
// Master

MasterSession::MasterSession(std::uint64_t config_hash, std::uint64_t d,
                             std::chrono::milliseconds worker_timeout)
    : config_hash_(config_hash), d_(d), worker_timeout_(worker_timeout) {}

MasterSession::~MasterSession() {
  try {
    shutdown();
  } catch (...) {
  }
}

void MasterSession::attach_worker(std::unique_ptr<Stream> stream) {
  std::optional<Frame> frame = read_frame(*stream);
  if (!frame || frame->type != MsgType::Hello) {
    throw ProtocolError("worker handshake: expected HELLO");
  }
  const HelloMsg hello = decode_hello(frame->payload);
  std::string mismatch;
  if (hello.protocol_version != kProtocolVersion) {
    mismatch = "protocol version";
  } else if (hello.generator_version != kGeneratorVersion) {
    mismatch = "generator version";
  } else if (hello.config_hash != config_hash_) {
    mismatch = "config hash";
  } else if (hello.d != d_) {
    mismatch = "parameter count";
  }
  if (!mismatch.empty()) {
    write_frame(*stream, MsgType::Abort,
                encode(AbortMsg{0, static_cast<std::uint32_t>(AbortReason::ConfigMismatch)}));
    stream->shutdown();
    throw ProtocolError("worker rejected: " + mismatch + " mismatch");
  }
  write_frame(*stream, MsgType::HelloAck, {});

  auto worker = std::make_unique<Worker>();
  worker->stream = std::move(stream);
  Worker* raw = worker.get();
  worker->reader = std::thread([this, raw] { reader_loop(*raw); });
  workers_.push_back(std::move(worker));
}

void MasterSession::reader_loop(Worker& worker) {
  try {
    while (true) {
      std::optional<Frame> frame = read_frame(*worker.stream);
      if (!frame) {
        break;  // worker closed
      }
      if (frame->type != MsgType::EvalResult) {
        throw ProtocolError("unexpected message type from worker: " +
                            std::to_string(static_cast<unsigned>(frame->type)));
      }
      const EvalResultMsg msg = decode_eval_result(frame->payload);
      std::lock_guard lock(mu_);
      if (!round_active_ || msg.iteration != round_iteration_) {
        round_error_ = "stale EVAL_RESULT for iteration " + std::to_string(msg.iteration);
      } else if (msg.member_index < 1 || msg.member_index > round_rewards_.size()) {
        round_error_ = "EVAL_RESULT member index " + std::to_string(msg.member_index) +
                       " out of range";
      } else {
        auto& slot = round_rewards_[msg.member_index - 1];
        if (slot.has_value()) {
          if (std::memcmp(&*slot, &msg.reward, sizeof(double)) != 0) {
            round_error_ = "inconsistent duplicate EVAL_RESULT for member " +
                           std::to_string(msg.member_index);
          }
          // bit-identical duplicate: idempotent
        } else {
          slot = msg.reward;
          ++round_received_;
        }
      }
      cv_.notify_all();
    }
  } catch (const std::exception& e) {
    std::lock_guard lock(mu_);
    if (round_error_.empty()) {
      round_error_ = e.what();
    }
  }
  std::lock_guard lock(mu_);
  worker.alive = false;
  cv_.notify_all();
}

void MasterSession::abort_round_locked(std::uint32_t iteration, AbortReason reason) {
  round_active_ = false;
  const std::vector<std::uint8_t> payload =
      encode(AbortMsg{iteration, static_cast<std::uint32_t>(reason)});
  for (auto& worker : workers_) {
    if (!worker->alive) {
      continue;
    }
    try {
      write_frame(*worker->stream, MsgType::Abort, payload);
    } catch (...) {
    }
  }
}

std::vector<double> MasterSession::master_round(std::uint32_t iteration, const EsConfig& cfg) {
  if (workers_.empty()) {
    throw ProtocolError("master_round: no workers attached");
  }
  const std::uint32_t n = cfg.population;
  {
    std::lock_guard lock(mu_);
    round_iteration_ = iteration;
    round_rewards_.assign(n, std::nullopt);
    round_received_ = 0;
    round_error_.clear();
    round_active_ = true;
  }

  // Contiguous partition of [1, N+1) in worker attach order.
  const std::size_t w = workers_.size();
  std::uint32_t lo = 1;
  for (std::size_t i = 0; i < w; ++i) {
    const std::uint32_t count =
        n / static_cast<std::uint32_t>(w) + (i < n % w ? 1u : 0u);
    workers_[i]->lo = lo;
    workers_[i]->hi = lo + count;
    lo += count;
    AssignMsg assign{iteration, workers_[i]->lo, workers_[i]->hi, cfg.run_seed, cfg.sigma};
    try {
      write_frame(*workers_[i]->stream, MsgType::Assign, encode(assign));
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      round_error_ = std::string("ASSIGN write failed: ") + e.what();
      break;
    }
  }

  std::unique_lock lock(mu_);
  const auto deadline = std::chrono::steady_clock::now() + worker_timeout_;
  const bool complete = cv_.wait_until(lock, deadline, [&] {
    if (!round_error_.empty() || round_received_ == n) {
      return true;
    }
    // A dead worker with outstanding members can never complete the round.
    for (const auto& worker : workers_) {
      if (!worker->alive && worker->hi > worker->lo) {
        for (std::uint32_t m = worker->lo; m < worker->hi; ++m) {
          if (!round_rewards_[m - 1].has_value()) {
            return true;
          }
        }
      }
    }
    return false;
  }) && round_error_.empty() && round_received_ == n;

  if (!complete) {
    std::string missing;
    for (std::uint32_t m = 1; m <= n; ++m) {
      if (!round_rewards_[m - 1].has_value()) {
        missing += missing.empty() ? std::to_string(m) : "," + std::to_string(m);
      }
    }
    const AbortReason reason =
        round_error_.empty() ? AbortReason::WorkerTimeout : AbortReason::ProtocolViolation;
    abort_round_locked(iteration, reason);
    std::string detail = round_error_.empty() ? "worker timeout" : round_error_;
    throw ProtocolError("round " + std::to_string(iteration) + " aborted (" + detail +
                        "); missing members: [" + missing + "]");
  }

  CommitMsg commit;
  commit.iteration = iteration;
  commit.rewards.resize(n);
  for (std::uint32_t m = 0; m < n; ++m) {
    commit.rewards[m] = *round_rewards_[m];
  }
  round_active_ = false;
  lock.unlock();

  const std::vector<std::uint8_t> payload = encode(commit);
  for (auto& worker : workers_) {
    try {
      last_commit_frame_bytes_ = write_frame(*worker->stream, MsgType::Commit, payload);
    } catch (const std::exception& e) {
      throw ProtocolError(std::string("COMMIT write failed: ") + e.what());
    }
  }
  return commit.rewards;
}

std::vector<double> MasterSession::evaluate(const ParameterVector& theta,
                                            std::uint32_t iteration, const EsConfig& cfg,
                                            const RewardFn& reward_fn) {
  // Workers own the reward function and the parameters never cross the wire;
  // the master only coordinates scalars.
  (void)theta;
  (void)reward_fn;
  return master_round(iteration, cfg);
}

void MasterSession::shutdown() {
  if (shut_down_) {
    return;
  }
  shut_down_ = true;
  for (auto& worker : workers_) {
    try {
      write_frame(*worker->stream, MsgType::Bye, {});
    } catch (...) {
    }
  }
  for (auto& worker : workers_) {
    worker->stream->shutdown();
    if (worker->reader.joinable()) {
      worker->reader.join();
    }
  }
}

// ---------------------------------------------------------------------------
// Worker

ParameterVector worker_loop(Stream& stream, WorkerContext ctx) {
  ctx.cfg.validate();
  if (ctx.reward_fn == nullptr) {
    throw InvalidInputError("worker_loop: missing reward function");
  }
  require_same_size(ctx.theta, ctx.anchor, "worker_loop");

  HelloMsg hello;
  hello.config_hash = ctx.config_hash;
  hello.d = ctx.theta.size();
  write_frame(stream, MsgType::Hello, encode(hello));
  {
    std::optional<Frame> frame = read_frame(stream);
    if (!frame) {
      throw ProtocolError("worker: connection closed during handshake");
    }
    if (frame->type == MsgType::Abort) {
      const AbortMsg abort = decode_abort(frame->payload);
      throw ProtocolError("worker: rejected by master (reason " +
                          std::to_string(abort.reason) + ")");
    }
    if (frame->type != MsgType::HelloAck) {
      throw ProtocolError("worker: expected HELLO_ACK");
    }
  }

  const bool needs_params = ctx.reward_fn->needs_params();
  while (true) {
    std::optional<Frame> frame = read_frame(stream);
    if (!frame) {
      throw ProtocolError("worker: connection closed without BYE");
    }
    switch (frame->type) {
      case MsgType::Assign: {
        const AssignMsg assign = decode_assign(frame->payload);
        if (assign.run_seed != ctx.cfg.run_seed ||
            std::memcmp(&assign.sigma, &ctx.cfg.sigma, sizeof(double)) != 0) {
          throw ProtocolError("worker: ASSIGN run_seed/sigma disagree with local config");
        }
        if (assign.lo < 1 || assign.hi < assign.lo ||
            assign.hi > ctx.cfg.population + 1) {
          throw ProtocolError("worker: ASSIGN range out of bounds");
        }
        for (std::uint32_t member = assign.lo; member < assign.hi; ++member) {
          const NoiseKey key{assign.run_seed, assign.iteration, member};
          double reward = 0.0;
          if (needs_params) {
            const ParameterVector perturbed = perturbed_params(ctx.theta, key, assign.sigma);
            reward = ctx.reward_fn->evaluate_member(perturbed, key);
          } else {
            reward = ctx.reward_fn->evaluate_member(ctx.theta, key);
          }
          if (!std::isfinite(reward)) {
            throw EvalError("worker: member " + std::to_string(member) +
                            " produced a non-finite reward");
          }
          write_frame(stream, MsgType::EvalResult,
                      encode(EvalResultMsg{assign.iteration, member, reward}));
        }
        break;
      }
      case MsgType::Commit: {
        const CommitMsg commit = decode_commit(frame->payload);
        if (commit.rewards.size() != ctx.cfg.population) {
          throw ProtocolError("worker: COMMIT with incomplete reward set (" +
                              std::to_string(commit.rewards.size()) + " of " +
                              std::to_string(ctx.cfg.population) + ")");
        }
        apply_population_update(ctx.theta, ctx.anchor, commit.iteration, ctx.cfg,
                                commit.rewards);
        break;
      }
      case MsgType::Abort: {
        const AbortMsg abort = decode_abort(frame->payload);
        throw ProtocolError("worker: round " + std::to_string(abort.iteration) +
                            " aborted by master (reason " + std::to_string(abort.reason) + ")");
      }
      case MsgType::Bye:
        return ctx.theta;
      default:
        throw ProtocolError("worker: unexpected message type " +
                            std::to_string(static_cast<unsigned>(frame->type)));
    }
  }
}

}  // namespace esaw::dist
