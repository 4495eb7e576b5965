#include "stolen/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "stolen/format.hpp"
#include "stolen/parallel.hpp"

namespace stolen {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// RunConfig

nlohmann::json RunConfig::to_json() const {
  json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["inputs"] = {{"embeddings", embeddings}, {"corpus", corpus}, {"model", model}};
  j["detection"] = {{"omega", omega ? json(*omega) : json(nullptr)},
                    {"target_interior", target_interior ? json(*target_interior) : json(nullptr)},
                    {"bins", bins},
                    {"exact_max_dim", exact_max_dim}};
  j["probe"] = {{"method", to_string(probe_method)},
                {"restarts", probe.restarts},
                {"steps", probe.steps},
                {"radius", probe.radius},
                {"grid_steps", probe.grid_steps},
                {"initial_step", probe.initial_step},
                {"backtrack", probe.backtrack}};
  j["toy_lm"] = {{"dim", toy.dim},
                 {"context_window", toy.context_window},
                 {"epochs", toy.epochs},
                 {"learning_rate", toy.learning_rate},
                 {"seed", toy.seed},
                 {"weight_init_scale", toy.weight_init_scale}};
  j["ensemble"] = {{"lambda", lambda}, {"mode", to_string(mode)}};
  j["rank"] = {{"top_k", top_k}};
  j["illustrate"] = {{"preset", preset},
                     {"target", target_token},
                     {"x", {axis_x.min, axis_x.max, axis_x.steps}},
                     {"y", {axis_y.min, axis_y.max, axis_y.steps}},
                     {"z_slices", z_slices}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json &j) {
  RunConfig c;
  try {
    c.subcommand = j.value("subcommand", "");
    c.seed = j.value("seed", c.seed);
    if (j.contains("inputs")) {
      const auto &in = j["inputs"];
      c.embeddings = in.value("embeddings", "");
      c.corpus = in.value("corpus", "");
      c.model = in.value("model", "");
    }
    if (j.contains("detection")) {
      const auto &d = j["detection"];
      if (d.contains("omega") && !d["omega"].is_null())
        c.omega = d["omega"].get<double>();
      if (d.contains("target_interior") && !d["target_interior"].is_null())
        c.target_interior = d["target_interior"].get<std::size_t>();
      c.bins = d.value("bins", c.bins);
      c.exact_max_dim = d.value("exact_max_dim", c.exact_max_dim);
    }
    if (j.contains("probe")) {
      const auto &p = j["probe"];
      c.probe_method = p.value("method", std::string("gradient-ascent")) == "grid"
                           ? ProbeMethod::grid
                           : ProbeMethod::gradient_ascent;
      c.probe.restarts = p.value("restarts", c.probe.restarts);
      c.probe.steps = p.value("steps", c.probe.steps);
      c.probe.radius = p.value("radius", c.probe.radius);
      c.probe.grid_steps = p.value("grid_steps", c.probe.grid_steps);
      c.probe.initial_step = p.value("initial_step", c.probe.initial_step);
      c.probe.backtrack = p.value("backtrack", c.probe.backtrack);
    }
    if (j.contains("toy_lm")) {
      const auto &t = j["toy_lm"];
      c.toy.dim = t.value("dim", c.toy.dim);
      c.toy.context_window = t.value("context_window", c.toy.context_window);
      c.toy.epochs = t.value("epochs", c.toy.epochs);
      c.toy.learning_rate = t.value("learning_rate", c.toy.learning_rate);
      c.toy.seed = t.value("seed", c.toy.seed);
      c.toy.weight_init_scale = t.value("weight_init_scale", c.toy.weight_init_scale);
    }
    if (j.contains("ensemble")) {
      c.lambda = j["ensemble"].value("lambda", c.lambda);
      c.mode = parse_ensemble_mode(j["ensemble"].value("mode", std::string("targeted")));
    }
    if (j.contains("rank"))
      c.top_k = j["rank"].value("top_k", c.top_k);
    if (j.contains("illustrate")) {
      const auto &il = j["illustrate"];
      c.preset = il.value("preset", "");
      c.target_token = il.value("target", "");
      auto axis = [](const json &a, AxisRange &r) {
        r = {a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<std::size_t>()};
      };
      if (il.contains("x"))
        axis(il["x"], c.axis_x);
      if (il.contains("y"))
        axis(il["y"], c.axis_y);
      if (il.contains("z_slices"))
        c.z_slices = il["z_slices"].get<std::vector<double>>();
    }
  } catch (const json::exception &e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  return c;
}

void RunConfig::propagate_seed() { toy.seed = seed; }

StageError::StageError(std::string stage, const std::string &message)
    : Error("[" + stage + "] " + message), stage_(std::move(stage)) {}

// ---------------------------------------------------------------------------
// Presets

EmbeddingSpace pyramid_space(bool f_inside) {
  Eigen::MatrixXd x(6, 3);
  x << 0.0, 0.0, 0.0,
       1.0, 0.0, 0.0,
       0.0, 1.0, 0.0,
       1.0, 1.0, 0.0,
       0.5, 0.5, 1.0,
       0.65, 0.35, f_inside ? 0.5 : 1.5;
  return EmbeddingSpace(Vocabulary({"A", "B", "C", "D", "E", "F"}), x);
}

EmbeddingSpace square_space(bool a_at_corner) {
  Eigen::MatrixXd x(4, 2);
  if (a_at_corner)
    x.row(0) << -1.0, -1.0;
  else
    x.row(0) << 1.0 / 3.0, 1.0 / 3.0;
  x.row(1) << 1.0, -1.0;
  x.row(2) << -1.0, 1.0;
  x.row(3) << 1.0, 1.0;
  return EmbeddingSpace(Vocabulary({"A", "B", "C", "D"}), x);
}

EmbeddingSpace preset_space(const std::string &name) {
  if (name == "pyramid-inside")
    return pyramid_space(true);
  if (name == "pyramid-outside")
    return pyramid_space(false);
  if (name == "square-corner")
    return square_space(true);
  if (name == "square-centroid")
    return square_space(false);
  throw Error("unknown preset '" + name + "'");
}

// ---------------------------------------------------------------------------
// Detection

DetectionOutcome detect(const EmbeddingSpace &space, const RunConfig &cfg) {
  DetectionOutcome out;
  DetectionParams params;
  params.bins_per_plane = cfg.bins;
  params.plane_seed = cfg.seed;

  if (cfg.omega) {
    params.omega = *cfg.omega;
    out.omega = params.omega;
    out.approximate = approximate_classify(space, params);
  } else {
    const std::size_t target = std::min(
        space.size(), cfg.target_interior.value_or(std::max<std::size_t>(1, space.size() / 20)));
    params.min_interior_target = target;
    OmegaSweep sweep = sweep_omega(space, params, target);
    if (sweep.reached) {
      out.omega = sweep.omega;
      out.approximate = std::move(sweep.classifications);
    } else {
      out.sweep_target_reached = false;
      out.omega = omega_grid_value(kOmegaGridSteps);
      params.omega = out.omega;
      out.approximate = approximate_classify(space, params);
    }
    sweep.classifications.clear();
    out.sweep = std::move(sweep);
  }

  if (space.dim() <= cfg.exact_max_dim) {
    out.exact = exact_classify_all(space);
    out.validation = compare_to_exact(out.approximate, *out.exact);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ranking

double RankSeries::average() const {
  if (points.empty())
    return 0.0;
  double total = 0.0;
  for (const auto &p : points)
    total += p.max_prob;
  return total / static_cast<double>(points.size());
}

const RankSeries *RankOutcome::find(std::string_view name) const {
  for (const auto &s : series)
    if (s.name == name)
      return &s;
  return nullptr;
}

std::vector<char> target_mask(const Corpus &corpus, std::size_t vocab_size) {
  std::vector<char> mask(vocab_size, 0);
  for (const auto &sentence : corpus.sentences)
    for (std::size_t t = 1; t < sentence.size(); ++t)
      mask.at(sentence[t]) = 1;
  return mask;
}

std::vector<double> trigram_max_prob(const TrigramModel &trigram, const Corpus &corpus) {
  const WordId bos = trigram.vocab().id(kBeginSentence);
  std::set<BigramContext> histories;
  for (const auto &sentence : corpus.sentences)
    for (std::size_t t = 1; t < sentence.size(); ++t)
      histories.insert(trigram_history(sentence, t, bos));
  std::vector<double> best(trigram.vocab().size(), 0.0);
  for (const auto &[u, v] : histories)
    for (WordId w = 0; w < best.size(); ++w)
      best[w] = std::max(best[w], trigram.prob(u, v, w));
  return best;
}

namespace {

  void sort_points(std::vector<RankPoint> &points) {
    std::sort(points.begin(), points.end(), [](const RankPoint &a, const RankPoint &b) {
      return a.max_prob != b.max_prob ? a.max_prob > b.max_prob : a.word < b.word;
    });
  }

  RankSeries make_series(std::string name, const std::vector<WordId> &words,
                         std::span<const WordMaxProb> nnlm_max, std::size_t top_k) {
    RankSeries s;
    s.name = std::move(name);
    s.set_size = words.size();
    s.omitted = words.empty();
    for (WordId w : words)
      s.points.push_back({w, nnlm_max[w].max_prob});
    sort_points(s.points);
    s.points.resize(std::min(s.points.size(), top_k));
    return s;
  }

}  // namespace

RankOutcome rank_words(std::span<const WordMaxProb> nnlm_max,
                       std::span<const double> trigram_max,
                       std::span<const HullClassification> labels,
                       std::span<const char> rankable, std::size_t top_k,
                       std::uint64_t seed) {
  const std::size_t V = nnlm_max.size();
  if (trigram_max.size() != V || rankable.size() != V)
    throw Error("ranking inputs disagree on vocabulary size");
  const auto interior = interior_mask(labels, V);

  std::vector<WordId> in_set, out_set, all;
  for (WordId w = 0; w < V; ++w) {
    if (!rankable[w])
      continue;
    all.push_back(w);
    (interior[w] ? in_set : out_set).push_back(w);
  }

  RankOutcome out;
  out.interior_empty = in_set.empty();
  out.series.push_back(make_series("interior", in_set, nnlm_max, top_k));
  out.series.push_back(make_series("non-interior", out_set, nnlm_max, top_k));

  std::mt19937_64 rng(seed);
  std::vector<WordId> sample = all;
  std::shuffle(sample.begin(), sample.end(), rng);
  sample.resize(in_set.size());
  std::sort(sample.begin(), sample.end());
  out.series.push_back(make_series("random", sample, nnlm_max, top_k));

  RankSeries tri;
  tri.name = "trigram";
  tri.set_size = in_set.size();
  tri.omitted = in_set.empty();
  for (const auto &p : out.series[0].points)
    tri.points.push_back({p.word, trigram_max[p.word]});
  sort_points(tri.points);
  out.series.push_back(std::move(tri));
  return out;
}

// ---------------------------------------------------------------------------
// Bias and norm diagnostics

bool within_odds_bound(double with_bias, double zero_bias, double max_abs_bias) {
  auto to_log_odds = [](double p) { return std::log(p) - std::log1p(-p); };
  return within_log_odds_bound(to_log_odds(with_bias), to_log_odds(zero_bias), max_abs_bias);
}

bool within_log_odds_bound(double a, double b, double max_abs_bias) {
  if (std::isinf(a) || std::isinf(b))
    return a == b;
  return std::abs(a - b) <= 2.0 * max_abs_bias + 1e-9 * (1.0 + std::abs(b));
}

namespace {

  void fill_bias_means(BiasCheck &check, const EmbeddingSpace &space,
                       std::span<const HullClassification> labels) {
    const auto interior = interior_mask(labels, space.size());
    double in_sum = 0.0, out_sum = 0.0;
    for (WordId w = 0; w < space.size(); ++w) {
      if (interior[w]) {
        in_sum += space.bias(w);
        ++check.interior_count;
      } else {
        out_sum += space.bias(w);
        ++check.non_interior_count;
      }
    }
    check.mean_bias_interior =
        check.interior_count ? in_sum / static_cast<double>(check.interior_count) : 0.0;
    check.mean_bias_non_interior =
        check.non_interior_count ? out_sum / static_cast<double>(check.non_interior_count) : 0.0;
    check.max_abs_bias = space.biases().size() ? space.biases().cwiseAbs().maxCoeff() : 0.0;
  }

}  // namespace

BiasCheck bias_check(const ToyLM &model, const Corpus &corpus,
                     std::span<const HullClassification> labels) {
  BiasCheck check;
  fill_bias_means(check, model.space(), labels);
  const ToyLM zeroed = model.with_output(model.space().without_biases());
  const auto with = empirical_max_prob(model, corpus);
  const auto zero = empirical_max_prob(zeroed, corpus);
  const double inf = std::numeric_limits<double>::infinity();
  for (WordId w = 0; w < with.size(); ++w) {
    BiasWordCheck c{w, with[w].max_prob, zero[w].max_prob, -inf, -inf, true};
    for (const auto &pos : {with[w].argmax, zero[w].argmax}) {
      if (!pos)
        continue;
      const auto &s = corpus.sentences[pos->sentence];
      const auto h = model.prediction_point(model.context(s, pos->index));
      c.log_odds_with_bias = std::max(c.log_odds_with_bias, log_odds(model.space(), w, h));
      c.log_odds_zero_bias = std::max(c.log_odds_zero_bias, log_odds(zeroed.space(), w, h));
    }
    c.within_odds_bound =
        within_log_odds_bound(c.log_odds_with_bias, c.log_odds_zero_bias, check.max_abs_bias);
    check.odds_bound_holds &= c.within_odds_bound;
    check.words.push_back(c);
  }
  return check;
}

BiasCheck bias_check(const EmbeddingSpace &space,
                     std::span<const HullClassification> labels,
                     const ProbeBudget &budget, std::uint64_t seed) {
  BiasCheck check;
  fill_bias_means(check, space, labels);
  const EmbeddingSpace zeroed = space.without_biases();
  check.words.resize(space.size());
  parallel_for(space.size(), [&](std::size_t w) {
    const auto a = max_prob_search(space, w, ProbeMethod::gradient_ascent, budget, seed);
    const auto b = max_prob_search(zeroed, w, ProbeMethod::gradient_ascent, budget, seed);
    const double inf = std::numeric_limits<double>::infinity();
    BiasWordCheck c{w, 0.0, 0.0, -inf, -inf, true};
    for (const auto *h : {&a.argmax_h, &b.argmax_h}) {
      c.with_bias = std::max(c.with_bias, std::exp(log_prob(space, w, *h)));
      c.zero_bias = std::max(c.zero_bias, std::exp(log_prob(zeroed, w, *h)));
      c.log_odds_with_bias = std::max(c.log_odds_with_bias, log_odds(space, w, *h));
      c.log_odds_zero_bias = std::max(c.log_odds_zero_bias, log_odds(zeroed, w, *h));
    }
    check.words[w] = c;
  });
  for (auto &c : check.words) {
    c.within_odds_bound =
        within_log_odds_bound(c.log_odds_with_bias, c.log_odds_zero_bias, check.max_abs_bias);
    check.odds_bound_holds &= c.within_odds_bound;
  }
  return check;
}

NormDiagnostic norm_diagnostic(const EmbeddingSpace &space,
                               std::span<const HullClassification> labels,
                               std::span<const WordMaxProb> max_probs,
                               std::span<const char> rankable) {
  const auto norm = norms(space);
  std::vector<WordId> interior, vertex;
  for (const auto &c : labels) {
    if (!rankable[c.word])
      continue;
    if (c.label == HullLabel::interior)
      interior.push_back(c.word);
    else if (c.label == HullLabel::vertex)
      vertex.push_back(c.word);
  }
  NormDiagnostic d;
  d.interior_count = interior.size();
  d.vertex_count = vertex.size();
  auto mean_norm = [&](const std::vector<WordId> &ws) {
    double s = 0.0;
    for (WordId w : ws)
      s += norm[w];
    return ws.empty() ? 0.0 : s / static_cast<double>(ws.size());
  };
  d.mean_norm_interior = mean_norm(interior);
  d.mean_norm_vertex = mean_norm(vertex);
  if (interior.empty())
    return d;

  std::vector<double> in_norms;
  for (WordId w : interior) {
    in_norms.push_back(norm[w]);
    d.max_prob_interior = std::max(d.max_prob_interior, max_probs[w].max_prob);
  }
  std::sort(in_norms.begin(), in_norms.end());
  const std::size_t m = in_norms.size();
  d.median_norm_interior =
      m % 2 ? in_norms[m / 2] : 0.5 * (in_norms[m / 2 - 1] + in_norms[m / 2]);
  for (WordId w : vertex)
    if (norm[w] < d.median_norm_interior && max_probs[w].max_prob > d.max_prob_interior)
      d.low_norm_strong_vertices.push_back(w);
  return d;
}

// ---------------------------------------------------------------------------
// Writers

void write_classification_csv(const EmbeddingSpace &space,
                              std::span<const HullClassification> labels,
                              std::ostream &out) {
  for (const auto &c : labels) {
    out << c.word << ',' << space.vocab().token(c.word) << ',' << to_string(c.label)
        << ',' << to_string(c.method) << ',';
    if (c.method == HullMethod::approximate)
      out << c.surviving_bins;
    out << '\n';
  }
}

nlohmann::json classification_json(const EmbeddingSpace &space,
                                   std::span<const HullClassification> labels) {
  json arr = json::array();
  for (const auto &c : labels) {
    json e = {{"word", c.word},
              {"token", space.vocab().token(c.word)},
              {"label", to_string(c.label)},
              {"method", to_string(c.method)}};
    if (c.method == HullMethod::approximate)
      e["surviving_bins"] = c.surviving_bins;
    if (!c.weights.empty()) {
      json w = json::array();
      for (const auto &[id, lambda] : c.weights)
        w.push_back({{"word", id}, {"weight", lambda}});
      e["weights"] = std::move(w);
    }
    if (c.separating_direction) {
      const auto &h = *c.separating_direction;
      e["separating_direction"] = std::vector<double>(h.data(), h.data() + h.size());
    }
    arr.push_back(std::move(e));
  }
  return arr;
}

void write_probe_csv(const EmbeddingSpace &space, std::span<const ProbeResult> results,
                     std::ostream &out) {
  const auto norm = norms(space);
  out << "word,token,max_prob,method,bound,norm\n";
  for (const auto &r : results) {
    out << r.word << ',' << space.vocab().token(r.word) << ',' << format_double(r.max_prob)
        << ',' << to_string(r.method) << ',';
    if (r.bound)
      out << format_double(*r.bound);
    out << ',' << format_double(norm[r.word]) << '\n';
  }
}

namespace {

  std::ofstream open_out(const fs::path &dir, const std::string &name) {
    fs::create_directories(dir);
    std::ofstream out(dir / name);
    if (!out)
      throw Error("cannot write '" + (dir / name).string() + "'");
    return out;
  }

  void write_json(const fs::path &dir, const std::string &name, const json &j) {
    auto out = open_out(dir, name);
    out << j.dump(2) << '\n';
  }

  const std::string &require(const std::string &value, const char *flag) {
    if (value.empty())
      throw Error(std::string("missing required ") + flag);
    return value;
  }

  json validation_json(const DetectorValidation &v) {
    return {{"precision", v.precision},
            {"recall", v.recall},
            {"approx_interior", v.approx_interior},
            {"exact_interior", v.exact_interior},
            {"true_positive", v.true_positive},
            {"excluded_undetermined", v.excluded_undetermined},
            {"precision_empty", v.precision_empty},
            {"recall_empty", v.recall_empty}};
  }

  std::size_t count_label(std::span<const HullClassification> labels, HullLabel l) {
    return static_cast<std::size_t>(std::count_if(
        labels.begin(), labels.end(), [&](const auto &c) { return c.label == l; }));
  }

  json label_counts(std::span<const HullClassification> labels) {
    return {{"vertex", count_label(labels, HullLabel::vertex)},
            {"interior", count_label(labels, HullLabel::interior)},
            {"undetermined", count_label(labels, HullLabel::undetermined)}};
  }

  void write_detection(const EmbeddingSpace &space, const DetectionOutcome &det,
                       const fs::path &dir) {
    {
      auto out = open_out(dir, "classification.csv");
      out << "word,token,label,method,surviving_bins\n";
      write_classification_csv(space, det.approximate, out);
      if (det.exact)
        write_classification_csv(space, *det.exact, out);
    }
    json cj = {{"omega", det.omega}, {"approximate", classification_json(space, det.approximate)}};
    if (det.exact)
      cj["exact"] = classification_json(space, *det.exact);
    write_json(dir, "classification.json", cj);

    json summary = {{"omega", det.omega},
                    {"omega_over_pi_128", det.omega * 128.0 / std::numbers::pi},
                    {"sweep_target_reached", det.sweep_target_reached},
                    {"approximate", label_counts(det.approximate)}};
    if (det.exact)
      summary["exact"] = label_counts(*det.exact);
    if (det.validation)
      summary["validation"] = validation_json(*det.validation);
    if (det.sweep) {
      auto out = open_out(dir, "omega_sweep.csv");
      out << "k,omega,interior_count\n";
      for (std::size_t k = 1; k <= det.sweep->interior_counts.size(); ++k)
        out << k << ',' << format_double(omega_grid_value(k)) << ','
            << det.sweep->interior_counts[k - 1] << '\n';
      summary["sweep_grid_index"] = det.sweep->grid_index;
    }
    write_json(dir, "detection_summary.json", summary);
  }

  void write_rank(const EmbeddingSpace &space, const RankOutcome &rank,
                  std::span<const WordMaxProb> max_probs,
                  std::span<const HullClassification> labels,
                  std::span<const char> rankable, const fs::path &dir) {
    {
      auto out = open_out(dir, "topk_curves.csv");
      out << "series,rank,word,token,max_prob\n";
      for (const auto &s : rank.series)
        for (std::size_t i = 0; i < s.points.size(); ++i)
          out << s.name << ',' << i + 1 << ',' << s.points[i].word << ','
              << space.vocab().token(s.points[i].word) << ','
              << format_double(s.points[i].max_prob) << '\n';
    }
    {
      auto out = open_out(dir, "avg_max_prob.csv");
      out << "series,k,set_size,avg_max_prob,omitted\n";
      for (const auto &s : rank.series)
        out << s.name << ',' << s.points.size() << ',' << s.set_size << ','
            << format_double(s.average()) << ',' << (s.omitted ? 1 : 0) << '\n';
    }
    {
      const auto norm = norms(space);
      auto label = std::vector<HullLabel>(space.size(), HullLabel::undetermined);
      for (const auto &c : labels)
        label[c.word] = c.label;
      auto out = open_out(dir, "scatter.csv");
      out << "word,token,norm,max_prob,label\n";
      for (WordId w = 0; w < space.size(); ++w)
        if (rankable[w])
          out << w << ',' << space.vocab().token(w) << ',' << format_double(norm[w]) << ','
              << format_double(max_probs[w].max_prob) << ',' << to_string(label[w]) << '\n';
    }
  }

  void write_ensemble(const EnsembleReport &report, std::span<const LambdaPoint> sweep,
                      const fs::path &dir) {
    {
      auto out = open_out(dir, "ensemble.csv");
      out << "subset,positions,nnlm_ppl,ensemble_ppl\n";
      for (const auto &r : report.rows)
        out << r.subset << ',' << r.positions << ',' << format_double(r.nnlm) << ','
            << format_double(r.ensemble) << '\n';
    }
    auto out = open_out(dir, "lambda_sweep.csv");
    out << "lambda,ensemble_ppl\n";
    for (const auto &p : sweep)
      out << format_double(p.lambda) << ',' << format_double(p.perplexity) << '\n';
  }

  json bias_json(const EmbeddingSpace &space, const BiasCheck &b) {
    json words = json::array();
    for (const auto &w : b.words)
      words.push_back({{"word", w.word},
                       {"token", space.vocab().token(w.word)},
                       {"max_prob_with_bias", w.with_bias},
                       {"max_prob_zero_bias", w.zero_bias},
                       {"log_odds_with_bias", w.log_odds_with_bias},
                       {"log_odds_zero_bias", w.log_odds_zero_bias},
                       {"within_odds_bound", w.within_odds_bound}});
    return {{"mean_bias_interior", b.mean_bias_interior},
            {"mean_bias_non_interior", b.mean_bias_non_interior},
            {"interior_count", b.interior_count},
            {"non_interior_count", b.non_interior_count},
            {"max_abs_bias", b.max_abs_bias},
            {"odds_bound_holds", b.odds_bound_holds},
            {"words", std::move(words)}};
  }

  json norm_json(const EmbeddingSpace &space, const NormDiagnostic &d) {
    json strong = json::array();
    for (WordId w : d.low_norm_strong_vertices)
      strong.push_back(space.vocab().token(w));
    return {{"interior_count", d.interior_count},
            {"vertex_count", d.vertex_count},
            {"mean_norm_interior", d.mean_norm_interior},
            {"mean_norm_vertex", d.mean_norm_vertex},
            {"median_norm_interior", d.median_norm_interior},
            {"max_prob_interior", d.max_prob_interior},
            {"low_norm_strong_vertices", std::move(strong)}};
  }

  struct ModelInputs {
    ToyLM model;
    Corpus corpus;
  };

  ModelInputs load_model_inputs(const RunConfig &cfg) {
    ToyLM model = load_toy_lm(require(cfg.model, "--model"));
    auto loaded = load_corpus(require(cfg.corpus, "--corpus"), &model.vocab());
    return {std::move(model), std::move(loaded.corpus)};
  }

  std::vector<ProbeResult> probe_all(const EmbeddingSpace &space, const RunConfig &cfg) {
    const ProbeMethod method = space.dim() <= 3 ? cfg.probe_method : ProbeMethod::gradient_ascent;
    return max_prob_search_all(space, method, cfg.probe, cfg.seed);
  }

}  // namespace

// ---------------------------------------------------------------------------
// Subcommands

void cmd_detect(const RunConfig &cfg) {
  const auto space = load_embeddings(require(cfg.embeddings, "--embeddings"));
  write_detection(space, detect(space, cfg), cfg.out_dir);
}

void cmd_probe(const RunConfig &cfg) {
  const auto space = load_embeddings(require(cfg.embeddings, "--embeddings"));
  auto out = open_out(cfg.out_dir, "probe.csv");
  write_probe_csv(space, probe_all(space, cfg), out);
}

void cmd_illustrate(const RunConfig &cfg) {
  EmbeddingSpace space = cfg.preset.empty()
                             ? load_embeddings(require(cfg.embeddings, "--embeddings or --preset"))
                             : preset_space(cfg.preset);
  const std::string target_token =
      cfg.target_token.empty() ? (cfg.preset.starts_with("pyramid") ? "F" : "A")
                               : cfg.target_token;
  IllustrationSpec spec;
  spec.target = space.vocab().id(target_token);
  spec.x = cfg.axis_x;
  spec.y = cfg.axis_y;

  json summary = {{"target", target_token}, {"slices", json::array()}};
  if (space.dim() == 2) {
    const auto grid = illustration(space, spec);
    auto out = open_out(cfg.out_dir, "illustration.csv");
    write_illustration_csv(grid, out);
    summary["slices"].push_back({{"file", "illustration.csv"}, {"max_prob", grid.max()}});
  } else {
    for (double z : cfg.z_slices) {
      spec.z_slice = z;
      const auto grid = illustration(space, spec);
      const std::string name = "illustration_z" + format_double(z) + ".csv";
      auto out = open_out(cfg.out_dir, name);
      write_illustration_csv(grid, out);
      summary["slices"].push_back({{"file", name}, {"z", z}, {"max_prob", grid.max()}});
    }
  }
  write_json(cfg.out_dir, "illustration_summary.json", summary);
}

void cmd_train(const RunConfig &cfg) {
  auto loaded = load_corpus(require(cfg.corpus, "--corpus"));
  RunConfig c = cfg;
  c.propagate_seed();
  const auto result = train(loaded.corpus, loaded.vocab, c.toy);
  save_toy_lm(result.model, cfg.out_dir / "model");
  auto out = open_out(cfg.out_dir, "train_log.csv");
  out << "epoch,perplexity\n";
  for (std::size_t e = 0; e < result.perplexity_trace.size(); ++e)
    out << e << ',' << format_double(result.perplexity_trace[e]) << '\n';
}

namespace {

  json trigram_summary(const TrigramModel &tg, const Corpus &corpus) {
    json d = json::array();
    for (std::size_t order = 0; order < 3; ++order) {
      const auto &x = tg.discounts()[order];
      d.push_back({{"order", order + 1},
                   {"d1", x.d1},
                   {"d2", x.d2},
                   {"d3plus", x.d3plus},
                   {"fallback", x.fallback}});
    }
    return {{"discounts", std::move(d)},
            {"fallback", tg.used_fallback()},
            {"trigram_types", tg.num_trigram_types()},
            {"perplexity", trigram_perplexity(tg, corpus)}};
  }

}  // namespace

void cmd_ngram(const RunConfig &cfg) {
  auto loaded = load_corpus(require(cfg.corpus, "--corpus"));
  const auto tg = TrigramModel::fit(loaded.corpus, loaded.vocab);
  {
    auto out = open_out(cfg.out_dir, "trigram.counts");
    tg.write(out);
  }
  write_json(cfg.out_dir, "trigram_summary.json", trigram_summary(tg, loaded.corpus));
}

void cmd_rank(const RunConfig &cfg) {
  auto in = load_model_inputs(cfg);
  const auto &space = in.model.space();
  const auto det = detect(space, cfg);
  const auto max_probs = empirical_max_prob(in.model, in.corpus);
  const auto tg = TrigramModel::fit(in.corpus, in.model.vocab());
  const auto rankable = target_mask(in.corpus, space.size());
  const auto rank = rank_words(max_probs, trigram_max_prob(tg, in.corpus), det.primary(),
                               rankable, cfg.top_k, cfg.seed);
  write_rank(space, rank, max_probs, det.primary(), rankable, cfg.out_dir);
}

void cmd_bias_check(const RunConfig &cfg) {
  if (!cfg.model.empty()) {
    auto in = load_model_inputs(cfg);
    const auto det = detect(in.model.space(), cfg);
    write_json(cfg.out_dir, "bias_check.json",
               bias_json(in.model.space(), bias_check(in.model, in.corpus, det.primary())));
    return;
  }
  const auto space = load_embeddings(require(cfg.embeddings, "--model or --embeddings"));
  const auto det = detect(space, cfg);
  write_json(cfg.out_dir, "bias_check.json",
             bias_json(space, bias_check(space, det.primary(), cfg.probe, cfg.seed)));
}

void cmd_ensemble(const RunConfig &cfg) {
  auto in = load_model_inputs(cfg);
  const auto det = detect(in.model.space(), cfg);
  const auto tg = TrigramModel::fit(in.corpus, in.model.vocab());
  EnsembleConfig ec;
  ec.lambda_nnlm = cfg.lambda;
  ec.mode = cfg.mode;
  ec.targeted_contexts = targeted_contexts(det.primary(), in.corpus, in.model.vocab());
  write_ensemble(ensemble_eval(in.model, tg, ec, in.corpus, det.primary()),
                 sweep_lambda(in.model, tg, ec, in.corpus), cfg.out_dir);
}

PipelineOutcome cmd_pipeline(const RunConfig &cfg_in) {
  RunConfig cfg = cfg_in;
  cfg.subcommand = "pipeline";
  cfg.propagate_seed();
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  fs::remove(dir / "FAILED");

  std::string stage = "manifest";
  auto fail = [&](const std::string &message) {
    auto out = open_out(dir, "FAILED");
    out << stage << ": " << message << '\n';
    return StageError(stage, message);
  };

  try {
    write_json(dir, "manifest.json", cfg.to_json());

    stage = "load";
    auto loaded = load_corpus(require(cfg.corpus, "--corpus"));

    stage = "train";
    PipelineOutcome out{train(loaded.corpus, loaded.vocab, cfg.toy), {}, {}, {}, {}, {}, {}};
    const ToyLM &model = out.training.model;
    const EmbeddingSpace &space = model.space();
    save_toy_lm(model, dir / "model");
    {
      auto log = open_out(dir, "train_log.csv");
      log << "epoch,perplexity\n";
      for (std::size_t e = 0; e < out.training.perplexity_trace.size(); ++e)
        log << e << ',' << format_double(out.training.perplexity_trace[e]) << '\n';
    }

    stage = "detect";
    out.detection = detect(space, cfg);
    write_detection(space, out.detection, dir);
    const auto &labels = out.detection.primary();

    stage = "probe";
    {
      auto f = open_out(dir, "probe.csv");
      write_probe_csv(space, probe_all(space, cfg), f);
      const auto zeroed = space.without_biases();
      auto g = open_out(dir, "probe_zero_bias.csv");
      write_probe_csv(zeroed, probe_all(zeroed, cfg), g);
    }

    stage = "ngram";
    const auto tg = TrigramModel::fit(loaded.corpus, loaded.vocab);
    {
      auto f = open_out(dir, "trigram.counts");
      tg.write(f);
    }
    write_json(dir, "trigram_summary.json", trigram_summary(tg, loaded.corpus));

    stage = "rank";
    out.max_probs = empirical_max_prob(model, loaded.corpus);
    const auto rankable = target_mask(loaded.corpus, space.size());
    out.ranking = rank_words(out.max_probs, trigram_max_prob(tg, loaded.corpus), labels,
                             rankable, cfg.top_k, cfg.seed);
    write_rank(space, out.ranking, out.max_probs, labels, rankable, dir);

    stage = "ensemble";
    EnsembleConfig ec;
    ec.lambda_nnlm = cfg.lambda;
    ec.mode = cfg.mode;
    ec.targeted_contexts = targeted_contexts(labels, loaded.corpus, loaded.vocab);
    out.ensemble = ensemble_eval(model, tg, ec, loaded.corpus, labels);
    write_ensemble(out.ensemble, sweep_lambda(model, tg, ec, loaded.corpus), dir);

    stage = "bias-check";
    out.bias = bias_check(model, loaded.corpus, labels);
    write_json(dir, "bias_check.json", bias_json(space, out.bias));

    stage = "norm-diagnostic";
    out.norms = norm_diagnostic(space, labels, out.max_probs, rankable);
    write_json(dir, "norm_diagnostic.json", norm_json(space, out.norms));
    return out;
  } catch (const StageError &) {
    throw;
  } catch (const std::exception &e) {
    throw fail(e.what());
  }
}

void run_subcommand(const RunConfig &cfg) {
  const auto &s = cfg.subcommand;
  auto tagged = [&](auto &&fn) {
    try {
      fn(cfg);
    } catch (const StageError &) {
      throw;
    } catch (const std::exception &e) {
      throw StageError(s, e.what());
    }
  };
  if (s == "detect")
    tagged(cmd_detect);
  else if (s == "probe")
    tagged(cmd_probe);
  else if (s == "illustrate")
    tagged(cmd_illustrate);
  else if (s == "train")
    tagged(cmd_train);
  else if (s == "rank")
    tagged(cmd_rank);
  else if (s == "bias-check")
    tagged(cmd_bias_check);
  else if (s == "ngram")
    tagged(cmd_ngram);
  else if (s == "ensemble")
    tagged(cmd_ensemble);
  else if (s == "pipeline")
    cmd_pipeline(cfg);
  else
    throw Error("unknown subcommand '" + s + "'");
}

}  // namespace stolen
