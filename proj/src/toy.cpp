#include "esaw/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "esaw/binio.hpp"
#include "esaw/snapshot.hpp"

namespace esaw {

namespace {

struct ParamView {
  const double* w1;
  const double* b1;
  const double* w2;
  const double* b2;
};

ParamView view(const ModelShape& s, const ParameterVector& p) {
  const std::size_t m = s.input_dim, h = s.hidden_dim, c = s.num_classes;
  if (p.size() != s.param_count()) {
    throw DimensionError("toy model: parameter vector has length " + std::to_string(p.size()) +
                         ", shape needs " + std::to_string(s.param_count()));
  }
  const double* base = p.data();
  ParamView v;
  v.w1 = base;
  v.b1 = base + h * m;
  v.w2 = v.b1 + h;
  v.b2 = v.w2 + c * h;
  return v;
}

struct MutParamView {
  double* w1;
  double* b1;
  double* w2;
  double* b2;
};

MutParamView mut_view(const ModelShape& s, ParameterVector& p) {
  const std::size_t m = s.input_dim, h = s.hidden_dim, c = s.num_classes;
  if (p.size() != s.param_count()) {
    throw DimensionError("toy model: gradient vector has wrong length");
  }
  double* base = p.data();
  MutParamView v;
  v.w1 = base;
  v.b1 = base + h * m;
  v.w2 = v.b1 + h;
  v.b2 = v.w2 + c * h;
  return v;
}

// Student init scales; small output layer keeps the initial policy close to
// uniform.
ParameterVector random_params(const ModelShape& s, std::uint64_t seed) {
  const std::size_t m = s.input_dim, h = s.hidden_dim, c = s.num_classes;
  ParameterVector p(s.param_count());
  const double w1_scale = 0.5 / std::sqrt(static_cast<double>(m));
  const double b1_scale = 0.1;
  const double w2_scale = 0.5 / std::sqrt(static_cast<double>(h));
  std::size_t idx = 0;
  for (std::size_t i = 0; i < h * m; ++i, ++idx) p[idx] = w1_scale * standard_normal_at(seed, idx);
  for (std::size_t i = 0; i < h; ++i, ++idx) p[idx] = b1_scale * standard_normal_at(seed, idx);
  for (std::size_t i = 0; i < c * h; ++i, ++idx) p[idx] = w2_scale * standard_normal_at(seed, idx);
  for (std::size_t i = 0; i < c; ++i, ++idx) p[idx] = 0.0;
  return p;
}

}  // namespace

void toy_forward(const ModelShape& shape, const ParameterVector& params,
                 std::span<const double> x, Scratch& scratch) {
  const std::size_t m = shape.input_dim, h = shape.hidden_dim, c = shape.num_classes;
  if (x.size() != m) {
    throw DimensionError("toy_forward: input length " + std::to_string(x.size()) +
                         " != input_dim " + std::to_string(m));
  }
  const ParamView v = view(shape, params);
  scratch.hidden.resize(h);
  scratch.probs.resize(c);
  for (std::size_t j = 0; j < h; ++j) {
    double z = v.b1[j];
    const double* row = v.w1 + j * m;
    for (std::size_t i = 0; i < m; ++i) {
      z += row[i] * x[i];
    }
    scratch.hidden[j] = std::tanh(z);
  }
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c; ++k) {
    double z = v.b2[k];
    const double* row = v.w2 + k * h;
    for (std::size_t j = 0; j < h; ++j) {
      z += row[j] * scratch.hidden[j];
    }
    scratch.probs[k] = z;
    max_logit = std::max(max_logit, z);
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    scratch.probs[k] = std::exp(scratch.probs[k] - max_logit);
    sum += scratch.probs[k];
  }
  for (std::size_t k = 0; k < c; ++k) {
    scratch.probs[k] /= sum;
  }
}

std::uint32_t toy_predict(const ModelShape& shape, const ParameterVector& params,
                          std::span<const double> x, Scratch& scratch) {
  toy_forward(shape, params, x, scratch);
  std::uint32_t best = 0;
  for (std::uint32_t k = 1; k < shape.num_classes; ++k) {
    if (scratch.probs[k] > scratch.probs[best]) {
      best = k;
    }
  }
  return best;
}

void toy_backprop_logits(const ModelShape& shape, const ParameterVector& params,
                         std::span<const double> x, std::span<const double> dlogits,
                         const Scratch& scratch, ParameterVector& grad) {
  const std::size_t m = shape.input_dim, h = shape.hidden_dim, c = shape.num_classes;
  if (dlogits.size() != c) {
    throw DimensionError("toy_backprop_logits: dlogits length mismatch");
  }
  const ParamView v = view(shape, params);
  const MutParamView g = mut_view(shape, grad);
  for (std::size_t j = 0; j < h; ++j) {
    const double a = scratch.hidden[j];
    double da = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double gk = dlogits[k];
      g.w2[k * h + j] += gk * a;
      da += gk * v.w2[k * h + j];
    }
    const double dz = da * (1.0 - a * a);
    double* row = g.w1 + j * m;
    for (std::size_t i = 0; i < m; ++i) {
      row[i] += dz * x[i];
    }
    g.b1[j] += dz;
  }
  for (std::size_t k = 0; k < c; ++k) {
    g.b2[k] += dlogits[k];
  }
}

ParameterVector log_prob_grad(const ModelShape& shape, const ParameterVector& params,
                              std::span<const double> x, std::uint32_t label) {
  if (label >= shape.num_classes) {
    throw InvalidInputError("log_prob_grad: label out of range");
  }
  Scratch scratch;
  toy_forward(shape, params, x, scratch);
  std::vector<double> dlogits(shape.num_classes);
  for (std::uint32_t k = 0; k < shape.num_classes; ++k) {
    dlogits[k] = (k == label ? 1.0 : 0.0) - scratch.probs[k];
  }
  ParameterVector grad(params.size());
  toy_backprop_logits(shape, params, x, dlogits, scratch, grad);
  return grad;
}

double accuracy(const ModelShape& shape, const ParameterVector& params,
                std::span<const LabeledExample> examples) {
  Scratch scratch;
  std::size_t correct = 0;
  for (const LabeledExample& ex : examples) {
    if (toy_predict(shape, params, ex.x, scratch) == ex.label) {
      ++correct;
    }
  }
  return examples.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(examples.size());
}

double AccuracyReward::evaluate(const ParameterVector& params) const {
  return accuracy(shape_, params, task_->split(split_));
}

ParameterVector teacher_params(const ModelShape& shape, std::uint64_t teacher_seed,
                               std::span<const double> anchor, double cluster_scale,
                               std::uint32_t signal_dim) {
  const std::size_t m = shape.input_dim, h = shape.hidden_dim, c = shape.num_classes;
  if (anchor.size() != m) {
    throw DimensionError("teacher_params: anchor length mismatch");
  }
  if (h < c - 1) {
    throw InvalidInputError("teacher_params: needs hidden_dim >= num_classes - 1");
  }
  if (signal_dim >= m) {
    throw InvalidInputError("teacher_params: signal_dim out of range");
  }
  const std::uint64_t base = derive_seed(teacher_seed, detail::kTeacherStream);
  ParameterVector p(shape.param_count());

  // The teacher is a staircase along the suite's signal coordinate: c-1
  // hidden units switch at jittered thresholds, and ordinal output weights
  // (W2[class k][unit t] = k, b2 = (c-1)k - k^2) make argmax_k equal the
  // number of thresholds crossed. The main threshold sits at the cluster
  // median, the outer ones in the upper tail, so labels are two dominant
  // intervals plus two thin ones: skewed enough that 200 training draws
  // generalize past the prior-accuracy threshold, while every class still
  // appears and no class exceeds the majority cap.
  const std::size_t active = signal_dim;
  const double gain = (1.0 + 0.5 * uniform_at(base, 1)) / cluster_scale;

  double* w1 = p.data();
  double* b1 = w1 + h * m;
  double* w2 = b1 + h;
  double* b2 = w2 + c * h;

  constexpr double kOffsets[3] = {0.0, 1.8, 2.2};
  const double flip = uniform_at(base, 90) < 0.5 ? -1.0 : 1.0;
  for (std::size_t t = 0; t + 1 < c; ++t) {
    const double threshold =
        anchor[active] +
        cluster_scale * flip * (kOffsets[t % 3] + 0.10 * standard_normal_at(base, 2 + t));
    w1[t * m + active] = gain * flip;
    b1[t] = -gain * flip * threshold;
  }
  // random assignment of class ids to intervals
  std::vector<std::size_t> cls(c);
  for (std::size_t k = 0; k < c; ++k) cls[k] = k;
  for (std::size_t k = c - 1; k > 0; --k) {
    const std::size_t j = static_cast<std::size_t>(uniform_at(base, 95 + k) * (k + 1));
    std::swap(cls[k], cls[std::min(j, k)]);
  }
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t t = 0; t + 1 < c; ++t) {
      w2[cls[k] * h + t] = static_cast<double>(k);
    }
    b2[cls[k]] = static_cast<double>((c - 1) * k) - static_cast<double>(k) * k;
  }
  // texture units: small random contributions that wiggle the boundaries
  // without changing the interval structure
  std::size_t draw = 100;
  for (std::size_t j = c - 1; j < h; ++j) {
    w1[j * m + active] = 0.5 * gain * standard_normal_at(base, draw++);
    b1[j] = -w1[j * m + active] *
            (anchor[active] + cluster_scale * standard_normal_at(base, draw++));
    for (std::size_t k = 0; k < c; ++k) {
      w2[k * h + j] = 0.02 * standard_normal_at(base, draw++);
    }
  }
  return p;
}

namespace {

TaskSpec generate_task(const SuiteParams& p, const ModelShape& shape, std::uint32_t task_id,
                       const std::vector<double>& anchor, std::uint32_t signal_dim) {
  const std::uint32_t total = p.train_size + p.eval_size;
  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    TaskSpec task;
    task.task_id = task_id;
    task.anchor = anchor;
    task.input_noise_scale = p.input_noise_scale;
    task.teacher_seed = derive_seed(p.seed, detail::kTeacherStream, task_id, attempt);
    const ParameterVector teacher =
        teacher_params(shape, task.teacher_seed, anchor, p.input_noise_scale, signal_dim);
    const std::uint64_t data_base = derive_seed(p.seed, detail::kDataStream, task_id, attempt);

    Scratch scratch;
    std::vector<LabeledExample> examples;
    examples.reserve(total);
    for (std::uint32_t e = 0; e < total; ++e) {
      LabeledExample ex;
      ex.x.resize(p.input_dim);
      for (std::uint32_t i = 0; i < p.input_dim; ++i) {
        ex.x[i] = anchor[i] +
                  p.input_noise_scale *
                      standard_normal_at(data_base, static_cast<std::uint64_t>(e) * p.input_dim + i);
      }
      ex.label = toy_predict(shape, teacher, ex.x, scratch);
      examples.push_back(std::move(ex));
    }
    // Train examples are draw indices [0, train), eval are [train, total):
    // disjoint by construction.
    task.train_set.assign(examples.begin(), examples.begin() + p.train_size);
    task.eval_set.assign(examples.begin() + p.train_size, examples.end());

    std::vector<std::uint32_t> counts(p.num_classes, 0);
    for (const LabeledExample& ex : task.train_set) {
      ++counts[ex.label];
    }
    const std::uint32_t max_count = *std::max_element(counts.begin(), counts.end());
    const std::uint32_t min_count = *std::min_element(counts.begin(), counts.end());
    const bool balanced =
        min_count > 0 && static_cast<double>(max_count) <= 0.6 * static_cast<double>(p.train_size);
    if (balanced) {
      return task;
    }
  }
  throw InvalidInputError("generate_suite: task " + std::to_string(task_id) +
                          " degenerate after 10 teacher attempts");
}

}  // namespace

TaskSuite generate_suite(const SuiteParams& p) {
  if (p.num_priors < 1) {
    throw InvalidInputError("generate_suite: num_priors must be >= 1");
  }
  if (!(p.anchor_spread > 0.0)) {
    throw InvalidInputError("generate_suite: anchor_spread must be > 0 (equal anchors make "
                            "tasks indistinguishable)");
  }
  if (p.num_classes < 2 || p.train_size == 0 || p.eval_size == 0) {
    throw InvalidInputError("generate_suite: degenerate sizes");
  }
  TaskSuite suite;
  suite.shape = ModelShape{p.input_dim, p.hidden_dim, p.num_classes};
  const std::uint32_t num_tasks = p.num_priors + 1;
  std::vector<std::vector<double>> anchors(num_tasks);
  for (std::uint32_t t = 0; t < num_tasks; ++t) {
    const std::uint64_t base = derive_seed(p.seed, detail::kAnchorStream, t);
    anchors[t].resize(p.input_dim);
    for (std::uint32_t i = 0; i < p.input_dim; ++i) {
      anchors[t][i] = p.anchor_spread * standard_normal_at(base, i);
    }
  }
  suite.signal_dim = static_cast<std::uint32_t>(
      uniform_at(derive_seed(p.seed, detail::kAnchorStream, 0xD1ULL), 0) * p.input_dim);
  suite.signal_dim %= p.input_dim;
  suite.target = generate_task(p, suite.shape, 0, anchors[0], suite.signal_dim);
  for (std::uint32_t k = 1; k < num_tasks; ++k) {
    suite.priors.push_back(generate_task(p, suite.shape, k, anchors[k], suite.signal_dim));
  }
  return suite;
}

PretrainResult pretrain(const TaskSuite& suite, std::uint64_t seed,
                        double target_mean_prior_accuracy, std::uint32_t max_steps,
                        double learning_rate) {
  const double chance = 1.0 / static_cast<double>(suite.shape.num_classes);
  if (!(target_mean_prior_accuracy > chance) || !(target_mean_prior_accuracy < 1.0)) {
    throw InvalidInputError("pretrain: accuracy threshold must lie in (1/c, 1)");
  }
  const std::size_t d = suite.shape.param_count();

  std::vector<const LabeledExample*> batch;
  for (const TaskSpec& task : suite.priors) {
    for (const LabeledExample& ex : task.train_set) {
      batch.push_back(&ex);
    }
  }
  if (batch.empty()) {
    throw InvalidInputError("pretrain: no prior-task training data");
  }

  PretrainResult result;
  result.theta_init = random_params(suite.shape, derive_seed(seed, detail::kInitStream));
  ParameterVector theta = result.theta_init;

  auto mean_prior_eval_accuracy = [&](const ParameterVector& params) {
    double sum = 0.0;
    for (const TaskSpec& task : suite.priors) {
      sum += accuracy(suite.shape, params, task.eval_set);
    }
    return sum / static_cast<double>(suite.priors.size());
  };

  Scratch scratch;
  std::vector<double> dlogits(suite.shape.num_classes);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  for (std::uint32_t step = 0;; ++step) {
    result.mean_prior_eval_accuracy = mean_prior_eval_accuracy(theta);
    if (result.mean_prior_eval_accuracy >= target_mean_prior_accuracy) {
      result.theta0 = theta;
      result.steps = step;
      return result;
    }
    if (step >= max_steps) {
      throw PretrainError("pretrain: mean prior eval accuracy " +
                              std::to_string(result.mean_prior_eval_accuracy) +
                              " below threshold " + std::to_string(target_mean_prior_accuracy) +
                              " after " + std::to_string(max_steps) + " steps",
                          result.mean_prior_eval_accuracy);
    }
    // Gradient of mean cross-entropy over the union batch.
    ParameterVector grad(d);
    for (const LabeledExample* ex : batch) {
      toy_forward(suite.shape, theta, ex->x, scratch);
      for (std::uint32_t k = 0; k < suite.shape.num_classes; ++k) {
        dlogits[k] = (scratch.probs[k] - (k == ex->label ? 1.0 : 0.0)) * inv_batch;
      }
      toy_backprop_logits(suite.shape, theta, ex->x, dlogits, scratch, grad);
    }
    GradientUpdate rec;
    rec.gradient = grad;
    rec.update = ParameterVector(d);
    for (std::size_t i = 0; i < d; ++i) {
      rec.update[i] = -learning_rate * grad[i];
    }
    axpy(theta, 1.0, rec.update);
    result.trajectory.push_back(std::move(rec));
  }
}

namespace {

constexpr char kSuiteMagic[4] = {'E', 'S', 'T', 'S'};
constexpr std::uint16_t kSuiteVersion = 1;

void encode_task(std::vector<std::uint8_t>& out, const TaskSpec& task) {
  put_u32(out, task.task_id);
  put_u64(out, task.teacher_seed);
  put_f64(out, task.input_noise_scale);
  for (double a : task.anchor) {
    put_f64(out, a);
  }
  put_u32(out, static_cast<std::uint32_t>(task.train_set.size()));
  put_u32(out, static_cast<std::uint32_t>(task.eval_set.size()));
  for (const auto* set : {&task.train_set, &task.eval_set}) {
    for (const LabeledExample& ex : *set) {
      for (double v : ex.x) {
        put_f64(out, v);
      }
      put_u32(out, ex.label);
    }
  }
}

TaskSpec decode_task(BinReader& r, const ModelShape& shape) {
  TaskSpec task;
  task.task_id = r.u32();
  task.teacher_seed = r.u64();
  task.input_noise_scale = r.f64();
  task.anchor.resize(shape.input_dim);
  for (auto& a : task.anchor) {
    a = r.f64();
  }
  const std::uint32_t train_count = r.u32();
  const std::uint32_t eval_count = r.u32();
  auto read_examples = [&](std::uint32_t count) {
    std::vector<LabeledExample> set(count);
    for (LabeledExample& ex : set) {
      ex.x.resize(shape.input_dim);
      for (double& v : ex.x) {
        v = r.f64();
      }
      ex.label = r.u32();
      if (ex.label >= shape.num_classes) {
        throw FormatError("suite: label out of range");
      }
    }
    return set;
  };
  task.train_set = read_examples(train_count);
  task.eval_set = read_examples(eval_count);
  return task;
}

}  // namespace

std::vector<std::uint8_t> suite_encode(const TaskSuite& suite) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kSuiteMagic, kSuiteMagic + 4);
  put_u16(out, kSuiteVersion);
  put_u16(out, 0);  // flags
  put_u32(out, suite.shape.input_dim);
  put_u32(out, suite.shape.hidden_dim);
  put_u32(out, suite.shape.num_classes);
  put_u32(out, suite.signal_dim);
  put_u32(out, static_cast<std::uint32_t>(suite.num_tasks()));
  encode_task(out, suite.target);
  for (const TaskSpec& task : suite.priors) {
    encode_task(out, task);
  }
  const std::uint64_t checksum =
      fnv1a64(std::span<const std::uint8_t>(out.data() + 4, out.size() - 4));
  put_u64(out, checksum);
  return out;
}

TaskSuite suite_decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) {
    throw FormatError("suite: file too short");
  }
  if (std::memcmp(bytes.data(), kSuiteMagic, 4) != 0) {
    throw FormatError("suite: bad magic");
  }
  const std::uint64_t stored = fnv1a64(bytes.subspan(4, bytes.size() - 12));
  BinReader tail(bytes.subspan(bytes.size() - 8));
  if (tail.u64() != stored) {
    throw FormatError("suite: checksum mismatch");
  }
  BinReader r(bytes.subspan(4, bytes.size() - 12));
  const std::uint16_t version = r.u16();
  if (version != kSuiteVersion) {
    throw FormatError("suite: unsupported version " + std::to_string(version));
  }
  (void)r.u16();  // flags
  TaskSuite suite;
  suite.shape.input_dim = r.u32();
  suite.shape.hidden_dim = r.u32();
  suite.shape.num_classes = r.u32();
  suite.signal_dim = r.u32();
  if (suite.signal_dim >= suite.shape.input_dim) {
    throw FormatError("suite: signal_dim out of range");
  }
  const std::uint32_t num_tasks = r.u32();
  if (num_tasks < 2) {
    throw FormatError("suite: needs a target and at least one prior task");
  }
  suite.target = decode_task(r, suite.shape);
  for (std::uint32_t i = 1; i < num_tasks; ++i) {
    suite.priors.push_back(decode_task(r, suite.shape));
  }
  if (!r.done()) {
    throw FormatError("suite: trailing bytes");
  }
  return suite;
}

void suite_write(const TaskSuite& suite, const std::filesystem::path& path) {
  atomic_write_file(path, suite_encode(suite));
}

TaskSuite suite_read(const std::filesystem::path& path) {
  return suite_decode(read_file_bytes(path));
}

}  // namespace esaw
