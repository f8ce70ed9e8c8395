#include "graphpde/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "graphpde/checkpoint.hpp"
#include "graphpde/dsl.hpp"

namespace gpde {

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch())
      .count();
}

std::string join(const std::string& dir, const char* leaf) {
  return (std::filesystem::path(dir) / leaf).string();
}

// Prediction tapes hold [P, width] activations per op; slabs keep the peak
// footprint small without touching per-point code paths.
constexpr int64_t kEvalChunk = 8192;

double sample_nrmse(const Model& m, const PreparedSample& ps) {
  const DatasetSample& s = *ps.src;
  const int r = s.frames.front().r;
  const int64_t per_frame = int64_t(r) * r;
  const int64_t total = per_frame * int64_t(s.frames.size());

  std::vector<double> pred(static_cast<size_t>(total));
  std::vector<double> ref(static_cast<size_t>(total));
  for (int64_t lo = 0; lo < total; lo += kEvalChunk) {
    const int64_t n = std::min(kEvalChunk, total - lo);
    Tensor txy({n, 3});
    for (int64_t i = 0; i < n; ++i) {
      const int64_t g = lo + i;
      const int64_t j = g / per_frame, cell = g % per_frame;
      txy.data[size_t(3 * i) + 0] = s.times[size_t(j)];
      txy.data[size_t(3 * i) + 1] = double(cell % r) / r;
      txy.data[size_t(3 * i) + 2] = double(cell / r) / r;
    }
    const Tensor out = predict(m, ps.bg, 0, txy);
    for (int64_t i = 0; i < n; ++i) {
      const int64_t g = lo + i;
      pred[size_t(g)] = out.data[size_t(i)];
      ref[size_t(g)] =
          double(s.frames[size_t(g / per_frame)].v[size_t(g % per_frame)]);
    }
  }
  return nrmse(pred, ref, kEvalEps);
}

struct CheckpointPaths {
  std::string best, last, opt, csv;
};

CheckpointPaths paths_in(const std::string& out_dir) {
  return {join(out_dir, "best.ckpt"), join(out_dir, "last.ckpt"),
          join(out_dir, "last.opt"), join(out_dir, "log.csv")};
}

void save_opt_state(const std::string& path, const AdamState& st,
                    int epoch, int64_t step, double best, int best_epoch) {
  RecordWriter w(path);
  w.put_i64("epoch", {int64_t(epoch)});
  w.put_i64("step", {step});
  w.put_i64("adam_step", {st.step});
  w.put_i64("best_epoch", {int64_t(best_epoch)});
  w.put_tensor("best_nrmse", Tensor::scalar(best), Dtype::f64);
  for (const auto& [name, t] : st.m)
    w.put_tensor("m." + name, t, Dtype::f64);
  for (const auto& [name, t] : st.v)
    w.put_tensor("v." + name, t, Dtype::f64);
  w.close();
}

}  // namespace

PreparedSample prepare_sample(const DatasetSample& s, const ModelConfig& cfg) {
  PreparedSample ps;
  CompileOptions opt;
  opt.n_branch = cfg.n_branch;
  opt.n_mod = cfg.n_mod;
  const PdeSystem sys = parse_pde(s.dsl);
  if (sys.vars.size() != 1)
    throw TrainError("dataset labels cover one variable; system declares " +
                     std::to_string(sys.vars.size()));
  const CompGraph g = compile(sys, opt);
  ps.bg = bind_numerics(g, {}, s.fields, cfg.func_res);
  ps.feats = compute_features(ps.bg.graph);
  ps.src = &s;
  return ps;
}

std::vector<VarLabels> sample_labels(const DatasetSample& s) {
  if (s.frames.empty()) throw TrainError("sample has no label frames");
  const int r = s.frames.front().r;
  const int64_t per_frame = int64_t(r) * r;
  const int64_t total = per_frame * int64_t(s.frames.size());

  VarLabels lab;
  lab.coords = Tensor({total, 3});
  lab.values.resize(size_t(total));
  for (size_t j = 0; j < s.frames.size(); ++j) {
    const double t = s.times[j];
    for (int64_t cell = 0; cell < per_frame; ++cell) {
      const int64_t row = int64_t(j) * per_frame + cell;
      lab.coords.data[size_t(3 * row) + 0] = t;
      lab.coords.data[size_t(3 * row) + 1] = double(cell % r) / r;
      lab.coords.data[size_t(3 * row) + 2] = double(cell / r) / r;
      lab.values[size_t(row)] = double(s.frames[j].v[size_t(cell)]);
    }
  }
  return {std::move(lab)};
}

double evaluate_nrmse(const Model& m, const Dataset& ds, int max_samples) {
  const int n = max_samples < 0
                    ? int(ds.samples.size())
                    : std::min<int>(max_samples, int(ds.samples.size()));
  if (n == 0) throw TrainError("evaluate_nrmse over an empty dataset");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const PreparedSample ps = prepare_sample(ds.samples[size_t(i)], m.cfg);
    sum += sample_nrmse(m, ps);
  }
  return sum / n;
}

double baseline_nrmse(const Dataset& ds, int max_samples) {
  const int n = max_samples < 0
                    ? int(ds.samples.size())
                    : std::min<int>(max_samples, int(ds.samples.size()));
  if (n == 0) throw TrainError("baseline_nrmse over an empty dataset");
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const DatasetSample& s = ds.samples[size_t(i)];
    const size_t per_frame = s.frames.front().v.size();
    std::vector<double> pred, ref;
    pred.reserve(per_frame * s.frames.size());
    ref.reserve(per_frame * s.frames.size());
    for (const GridField& f : s.frames)
      for (size_t c = 0; c < per_frame; ++c) {
        pred.push_back(double(s.frames.front().v[c]));
        ref.push_back(double(f.v[c]));
      }
    sum += nrmse(pred, ref, kEvalEps);
  }
  return sum / n;
}

TrainResult train_model(Model& m, const Dataset& train_ds,
                        const Dataset& test_ds, const TrainConfig& cfg,
                        const std::string& out_dir) {
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.mc_points < 1)
    throw TrainError("non-positive epoch/batch/mc configuration");
  if (train_ds.samples.empty()) throw TrainError("empty training set");

  const int n_train = int(train_ds.samples.size());
  std::vector<PreparedSample> prep;
  prep.reserve(size_t(n_train));
  for (const DatasetSample& s : train_ds.samples)
    prep.push_back(prepare_sample(s, m.cfg));

  const int64_t batches_per_epoch =
      (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = batches_per_epoch * cfg.epochs;

  AdamState adam;
  int64_t step = 0;
  int start_epoch = 0;  // completed epochs
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  const bool persist = !out_dir.empty();
  CheckpointPaths cp = paths_in(persist ? out_dir : ".");
  if (persist) {
    std::filesystem::create_directories(out_dir);
    if (std::filesystem::exists(cp.last)) {
      if (!std::filesystem::exists(cp.opt))
        throw TrainError("resume found " + cp.last + " without " + cp.opt);
      std::map<std::string, std::string> meta;
      Model prev = load_model(cp.last, &meta);
      if (!(prev.cfg == m.cfg))
        throw TrainError("resume checkpoint was trained with a different "
                         "model configuration");
      m.params = std::move(prev.params);
      auto rec = read_record_map(cp.opt);
      start_epoch = int(rec.at("epoch").as_i64()[0]);
      step = rec.at("step").as_i64()[0];
      adam.step = rec.at("adam_step").as_i64()[0];
      best_epoch = int(rec.at("best_epoch").as_i64()[0]);
      best = rec.at("best_nrmse").as_tensor().data[0];
      for (const auto& [name, t] : m.params) {
        adam.m[name] = rec.at("m." + name).as_tensor();
        adam.v[name] = rec.at("v." + name).as_tensor();
      }
    }
  }

  std::ofstream csv;
  if (persist) {
    const bool fresh = !std::filesystem::exists(cp.csv) || start_epoch == 0;
    csv.open(cp.csv, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw TrainError("cannot write " + cp.csv);
    if (fresh) csv << "epoch,step,lr,train_loss,test_nrmse,seconds\n";
  }

  TrainResult result;
  std::vector<int> order(static_cast<size_t>(n_train));

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    // Per-epoch streams make a resumed run bitwise identical to an
    // uninterrupted one.
    Rng shuffle_rng = Rng::fork(cfg.seed, {0x7EA1, uint64_t(epoch)});
    Rng mc_rng = Rng::fork(cfg.seed, {0x7EA2, uint64_t(epoch)});

    for (int i = 0; i < n_train; ++i) order[size_t(i)] = i;
    for (int i = n_train - 1; i > 0; --i)
      std::swap(order[size_t(i)],
                order[size_t(shuffle_rng.below(uint64_t(i) + 1))]);

    double epoch_loss = 0.0;
    double lr = 0.0;
    for (int64_t b = 0; b < batches_per_epoch; ++b) {
      const int lo = int(b) * cfg.batch_size;
      const int hi = std::min(lo + cfg.batch_size, n_train);

      ParamMap grads;
      for (const auto& [name, t] : m.params) grads[name] = Tensor(t.shape);
      for (int i = lo; i < hi; ++i) {
        const PreparedSample& ps = prep[size_t(order[size_t(i)])];
        Tape tape;
        const TapeParams tp = attach_params(tape, m, true);
        const std::vector<VarLabels> labels = sample_labels(*ps.src);
        const McLoss loss =
            mc_loss(tape, tp, m.cfg, ps.bg, ps.feats, labels, cfg.mc_points,
                    cfg.train_eps, mc_rng);
        const double lv = tape.val(loss.node).data[0];
        if (!std::isfinite(lv))
          throw TrainError("non-finite loss at epoch " +
                           std::to_string(epoch + 1));
        epoch_loss += lv;
        tape.backward(loss.node);
        for (const auto& [name, id] : tp.id) {
          const Tensor* g = tape.grad(id);
          if (!g) continue;
          Tensor& acc = grads.at(name);
          for (int64_t k = 0; k < g->numel(); ++k) acc.data[size_t(k)] += g->data[size_t(k)];
        }
      }
      const double inv = 1.0 / (hi - lo);
      for (auto& [name, g] : grads)
        for (double& x : g.data) x *= inv;
      clip_grad_norm(grads, 1.0);
      lr = lr_at(step + 1, total_steps, cfg.warmup_steps, cfg.lr_max);
      adam_step(m.params, grads, adam, lr);
      ++step;
    }

    EpochStats st;
    st.epoch = epoch + 1;
    st.step = step;
    st.lr = lr;
    st.train_loss = epoch_loss / n_train;
    st.test_nrmse = std::numeric_limits<double>::quiet_NaN();
    if (cfg.eval_samples != 0 && !test_ds.samples.empty()) {
      st.test_nrmse = evaluate_nrmse(m, test_ds, cfg.eval_samples);
      if (st.test_nrmse < best) {
        best = st.test_nrmse;
        best_epoch = epoch + 1;
        if (persist)
          save_model(cp.best, m, Dtype::f32,
                     {{"epoch", std::to_string(epoch + 1)},
                      {"test_nrmse", std::to_string(best)}});
      }
    }
    st.seconds = now_seconds() - t0;
    result.log.push_back(st);

    if (persist) {
      save_model(cp.last, m, Dtype::f64,
                 {{"epoch", std::to_string(epoch + 1)},
                  {"step", std::to_string(step)}});
      save_opt_state(cp.opt, adam, epoch + 1, step, best, best_epoch);
      char line[160];
      std::snprintf(line, sizeof line, "%d,%lld,%.8g,%.8g,%.8g,%.3f\n",
                    st.epoch, static_cast<long long>(st.step), st.lr,
                    st.train_loss, st.test_nrmse, st.seconds);
      csv << line;
      csv.flush();
    }
  }

  result.best_test_nrmse = best;
  result.best_epoch = best_epoch;
  result.steps = step;
  return result;
}

}  // namespace gpde
