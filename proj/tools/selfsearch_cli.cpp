// Command-line surface for dataset-scale runs: scoring, pass@k coverage,
// scaling-law fits, and rollout execution against a mock or HTTP backend.
//
// Conventions: JSONL for records and episodes, CSV for numeric tables,
// diagnostics on stderr, JSON/CSV payloads on stdout. Exit codes: 0 ok,
// 1 usage, 2 data, 3 backend.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "selfsearch/dataset.hpp"
#include "selfsearch/http_policy.hpp"
#include "selfsearch/metrics.hpp"
#include "selfsearch/policy.hpp"
#include "selfsearch/retrieval.hpp"
#include "selfsearch/rollout.hpp"
#include "selfsearch/scaling.hpp"

namespace {

namespace ss = selfsearch;
using ss::dataset::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_input(const std::string& path) {
  if (path == "-") {
    std::stringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) throw IoError("cannot open output: " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::vector<std::string> split_lines(const std::string& content) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    const std::size_t eol = std::min(content.find('\n', pos), content.size());
    lines.emplace_back(content.substr(pos, eol - pos));
    if (eol >= content.size()) break;
    pos = eol + 1;
  }
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

ss::reward::MatchMode parse_match_mode(const std::string& name) {
  if (name == "substring") return ss::reward::MatchMode::SubstringMatch;
  return ss::reward::MatchMode::ExactMatch;
}

// ---------------------------------------------------------------------------
// score
// ---------------------------------------------------------------------------

struct ScoreArgs {
  std::string in = "-";
  std::string out = "-";
  std::string match = "em";
  double lambda_f = 0.1;
};

int run_score(const ScoreArgs& args) {
  const auto lines = split_lines(read_input(args.in));
  Output output(args.out);
  auto& out = output.stream();

  ss::reward::CompositeOptions opts;
  opts.mode = parse_match_mode(args.match);
  opts.lambda_f = args.lambda_f;

  std::size_t scored = 0;
  std::size_t skipped = 0;
  double em_sum = 0.0;
  double composite_sum = 0.0;
  std::size_t format_valid = 0;

  for (const auto& line : lines) {
    if (ss::text::strip(line).empty()) continue;
    json rec;
    std::string id;
    std::string response;
    std::vector<std::string> golds;
    try {
      rec = json::parse(line);
      id = rec.contains("id") ? (rec["id"].is_string() ? rec["id"].get<std::string>()
                                                       : rec["id"].dump())
                              : std::string();
      response = rec.at("response").get<std::string>();
      for (const auto& field : {"golds", "golden_answers", "answers", "answer", "gold"}) {
        if (rec.contains(field)) {
          golds = ss::dataset::detail::as_string_list(rec[field]);
          break;
        }
      }
      if (golds.empty()) throw std::invalid_argument("no golds");
    } catch (const std::exception&) {
      ++skipped;
      continue;
    }

    const auto breakdown = ss::reward::composite_reward(response, golds, opts);
    const int em = breakdown.correct ? 1 : 0;
    json row;
    row["id"] = id;
    row["em"] = em;
    row["correct"] = breakdown.correct;
    row["format_score"] = breakdown.format_score;
    row["format_ok"] = breakdown.format_ok;
    row["composite"] = breakdown.composite;
    out << row.dump() << "\n";

    ++scored;
    em_sum += em;
    composite_sum += breakdown.composite;
    if (breakdown.format_ok) ++format_valid;
  }

  if (scored == 0) {
    std::cerr << "score: no scoreable records (" << skipped << " skipped)\n";
    return kExitData;
  }
  json summary;
  summary["summary"] = true;
  summary["records"] = scored;
  summary["skipped"] = skipped;
  summary["mean_em"] = em_sum / static_cast<double>(scored);
  summary["mean_composite"] = composite_sum / static_cast<double>(scored);
  summary["format_valid_rate"] = static_cast<double>(format_valid) / static_cast<double>(scored);
  out << summary.dump() << "\n";
  if (skipped > 0) std::cerr << "score: skipped " << skipped << " malformed lines\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// passk
// ---------------------------------------------------------------------------

struct PasskArgs {
  std::string in = "-";
  std::string out = "-";
  std::string k_grid;  // comma-separated; default powers of two up to K
  bool fit = false;
};

std::vector<std::size_t> parse_k_grid(const std::string& grid, std::size_t max_k) {
  std::vector<std::size_t> ks;
  if (grid.empty()) {
    for (std::size_t k = 1; k <= max_k; k *= 2) ks.push_back(k);
    return ks;
  }
  std::stringstream ss(grid);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto s = ss::text::strip(item);
    if (s.empty()) continue;
    ks.push_back(static_cast<std::size_t>(std::stoull(std::string(s))));
  }
  return ks;
}

int run_passk(const PasskArgs& args) {
  const auto lines = split_lines(read_input(args.in));
  std::vector<ss::metrics::SampleResult> results;
  std::size_t skipped = 0;
  for (const auto& line : lines) {
    if (ss::text::strip(line).empty()) continue;
    try {
      const auto rec = json::parse(line);
      ss::metrics::SampleResult r;
      r.question_id = rec.value("question_id", rec.value("id", ""));
      r.n_samples = rec.contains("n_samples") ? rec["n_samples"].get<std::size_t>()
                                              : rec.value("K", std::size_t{0});
      r.n_correct = rec.contains("n_correct") ? rec["n_correct"].get<std::size_t>()
                                              : rec.value("C", std::size_t{0});
      if (r.n_samples == 0 || r.n_correct > r.n_samples) throw std::invalid_argument("counts");
      results.push_back(std::move(r));
    } catch (const std::exception&) {
      ++skipped;
    }
  }
  if (results.empty()) {
    std::cerr << "passk: no usable rows (" << skipped << " skipped)\n";
    return kExitData;
  }
  const std::size_t min_k =
      std::min_element(results.begin(), results.end(), [](const auto& a, const auto& b) {
        return a.n_samples < b.n_samples;
      })->n_samples;
  const auto ks = parse_k_grid(args.k_grid, min_k);

  std::vector<ss::scaling::FitPoint> points;
  for (std::size_t k : ks) {
    if (k > min_k) {
      std::cerr << "passk: k=" << k << " exceeds the smallest sample count K=" << min_k << "\n";
      return kExitData;
    }
    points.push_back({static_cast<double>(k), ss::metrics::pass_at_k_benchmark(results, k)});
  }

  Output output(args.out);
  auto& out = output.stream();
  if (!args.fit) {
    out << "k,coverage\n";
    char buf[64];
    for (const auto& p : points) {
      std::snprintf(buf, sizeof(buf), "%g,%.6f\n", p.k, p.coverage);
      out << buf;
    }
    return kExitOk;
  }

  try {
    const auto model = ss::scaling::fit_scaling_law(points);
    char head[200];
    std::snprintf(head, sizeof(head), "a=%.6f b=%.6f r2=%.6f rmse_pct=%.6f mae_pct=%.6f\n",
                  model.a, model.b, model.r2, model.rmse_pct, model.mae_pct);
    out << head << ss::scaling::fit_report_csv(points, model);
  } catch (const std::invalid_argument& e) {
    std::cerr << "passk: fit failed: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

struct FitArgs {
  std::string in = "-";
  std::string out = "-";
  bool percent = false;  // input coverages are percentages
};

int run_fit(const FitArgs& args) {
  const auto lines = split_lines(read_input(args.in));
  std::vector<ss::scaling::FitPoint> points;
  std::size_t row = 0;
  for (const auto& line : lines) {
    const auto stripped = ss::text::strip(line);
    if (stripped.empty()) continue;
    const std::size_t comma = stripped.find(',');
    if (comma == std::string_view::npos) {
      std::cerr << "fit: row " << row + 1 << " is not 'k,coverage'\n";
      return kExitData;
    }
    double k = 0.0;
    double c = 0.0;
    try {
      k = std::stod(std::string(stripped.substr(0, comma)));
      c = std::stod(std::string(stripped.substr(comma + 1)));
    } catch (const std::exception&) {
      if (row == 0 && points.empty()) continue;  // tolerate a header line
      std::cerr << "fit: row " << row + 1 << " is not numeric\n";
      return kExitData;
    }
    ++row;
    if (args.percent) c /= 100.0;
    if (!(c > 0.0 && c < 1.0)) {
      std::cerr << "fit: row " << row << " coverage " << c
                << " outside (0,1); use --percent for percentage inputs\n";
      return kExitData;
    }
    points.push_back({k, c});
  }
  Output output(args.out);
  auto& out = output.stream();
  try {
    const auto model = ss::scaling::fit_scaling_law(points);
    char head[200];
    std::snprintf(head, sizeof(head), "a=%.6f b=%.6f r2=%.6f rmse_pct=%.6f mae_pct=%.6f\n",
                  model.a, model.b, model.r2, model.rmse_pct, model.mae_pct);
    out << head << ss::scaling::fit_report_csv(points, model);
  } catch (const std::invalid_argument& e) {
    std::cerr << "fit: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// rollout
// ---------------------------------------------------------------------------

struct RolloutArgs {
  std::string in = "-";
  std::string out = "-";
  std::string samples_out;
  std::string manifest_path;
  std::string mode = "single";
  std::string match = "em";
  std::string backend_url;
  std::string model;
  std::string corpus_path;
  std::string web_fixture_path;
  std::string replace = "uptok";
  bool mock = false;
  bool always_first_external = true;
  std::size_t samples = 1;
  std::size_t budget_k = 1;
  std::size_t top_n = 3;
  std::size_t max_turns = 10;
  std::size_t max_tokens = 8192;
  double temperature = 0.7;
  std::optional<std::uint64_t> seed;
};

int run_rollout(const RolloutArgs& args) {
  ss::rollout::RolloutConfig cfg;
  if (args.mode == "single") {
    cfg.mode = ss::rollout::RolloutMode::SinglePass;
  } else if (args.mode == "multi") {
    cfg.mode = ss::rollout::RolloutMode::MultiTurn;
  } else if (args.mode == "reflect") {
    cfg.mode = ss::rollout::RolloutMode::Reflection;
  } else if (args.mode == "sim2real") {
    cfg.mode = ss::rollout::RolloutMode::Sim2Real;
  } else if (args.mode == "entropy") {
    cfg.mode = ss::rollout::RolloutMode::EntropyRouted;
  } else {
    std::cerr << "rollout: unknown mode " << args.mode << "\n";
    return kExitUsage;
  }
  if (args.replace == "first") {
    cfg.replace_position = ss::rollout::ReplacePosition::First;
  } else if (args.replace == "last") {
    cfg.replace_position = ss::rollout::ReplacePosition::Last;
  } else if (args.replace == "all") {
    cfg.replace_position = ss::rollout::ReplacePosition::All;
  } else {
    cfg.replace_position = ss::rollout::ReplacePosition::UpToK;
  }
  cfg.sim2real_budget = args.budget_k;
  cfg.top_n = args.top_n;
  cfg.max_turns = args.max_turns;
  cfg.gen.max_tokens = args.max_tokens;
  cfg.gen.temperature = args.temperature;
  cfg.always_first_external = args.always_first_external;

  if (args.mock && !args.seed.has_value()) {
    std::cerr << "rollout: --seed is required with --mock (reproducible runs)\n";
    return kExitUsage;
  }
  const std::uint64_t seed = args.seed.value_or(0);

  // Backend.
  std::unique_ptr<ss::policy::Policy> policy;
  ss::policy::HttpPolicyOptions http_opts;
  if (args.mock) {
    policy = std::make_unique<ss::policy::SelfSearchMock>();
  } else {
    if (args.backend_url.empty()) {
      std::cerr << "rollout: --backend-url required without --mock\n";
      return kExitBackend;
    }
    http_opts.base_url = args.backend_url;
    http_opts.model = args.model;
    // Preflight: any HTTP response proves reachability; transport errors do not.
    httplib::Client probe(args.backend_url);
    probe.set_connection_timeout(5, 0);
    if (auto res = probe.Get("/v1/models"); !res) {
      std::cerr << "rollout: backend unreachable at " << args.backend_url << " ("
                << httplib::to_string(res.error()) << ")\n";
      return kExitBackend;
    }
    policy = std::make_unique<ss::policy::HttpPolicy>(http_opts);
  }

  // External information source for sim2real / entropy modes.
  std::unique_ptr<ss::retrieval::InfoSource> external;
  if (!args.corpus_path.empty()) {
    external = std::make_unique<ss::retrieval::CorpusSource>(
        ss::retrieval::CorpusSource::from_jsonl_file(args.corpus_path));
  } else if (!args.web_fixture_path.empty()) {
    external = std::make_unique<ss::retrieval::FixtureWebSource>(
        ss::retrieval::FixtureWebSource::from_jsonl_file(args.web_fixture_path));
  } else if (cfg.mode == ss::rollout::RolloutMode::Sim2Real ||
             cfg.mode == ss::rollout::RolloutMode::EntropyRouted) {
    // Offline default: deterministic synthetic web results.
    external = std::make_unique<ss::retrieval::FixtureWebSource>();
  }

  const std::string input = read_input(args.in);
  std::istringstream stream(input);
  ss::dataset::LoadStats stats;
  const auto records =
      ss::dataset::load_jsonl(stream, stats, {}, parse_match_mode(args.match));
  if (records.empty()) {
    std::cerr << "rollout: no usable dataset records (" << stats.skipped << " skipped)\n";
    return kExitData;
  }

  if (!args.manifest_path.empty()) {
    ss::dataset::RunManifest manifest;
    manifest.seed = seed;
    manifest.backend_url = args.mock ? "mock" : args.backend_url;
    manifest.model = args.model;
    manifest.api_key_env = http_opts.api_key_env;
    json cfg_json;
    cfg_json["mode"] = args.mode;
    cfg_json["match"] = args.match;
    cfg_json["samples"] = args.samples;
    cfg_json["k"] = args.budget_k;
    cfg_json["replace"] = args.replace;
    cfg_json["top_n"] = args.top_n;
    cfg_json["max_turns"] = args.max_turns;
    cfg_json["max_tokens"] = args.max_tokens;
    cfg_json["temperature"] = args.temperature;
    cfg_json["always_first_external"] = args.always_first_external;
    cfg_json["mock"] = args.mock;
    manifest.config = cfg_json;
    if (args.in != "-") manifest.inputs.emplace_back(args.in, ss::dataset::hash_file(args.in));
    if (!args.corpus_path.empty()) {
      manifest.inputs.emplace_back(args.corpus_path, ss::dataset::hash_file(args.corpus_path));
    }
    if (!args.web_fixture_path.empty()) {
      manifest.inputs.emplace_back(args.web_fixture_path,
                                   ss::dataset::hash_file(args.web_fixture_path));
    }
    std::ofstream mf(args.manifest_path, std::ios::binary);
    if (!mf) throw IoError("cannot open manifest output: " + args.manifest_path);
    mf << manifest.to_json().dump(2) << "\n";
  }

  Output output(args.out);
  auto& out = output.stream();
  std::unique_ptr<Output> samples_output;
  if (!args.samples_out.empty()) samples_output = std::make_unique<Output>(args.samples_out);

  double em_sum = 0.0;
  double search_sum = 0.0;
  double token_sum = 0.0;
  double format_ok_count = 0.0;
  std::size_t episodes = 0;

  for (std::size_t rec_idx = 0; rec_idx < records.size(); ++rec_idx) {
    const auto& rec = records[rec_idx];
    ss::reward::CompositeOptions score_opts;
    score_opts.mode = rec.match_mode;

    std::vector<ss::metrics::SampleOutcome> outcomes;
    for (std::size_t s = 0; s < args.samples; ++s) {
      ss::rollout::RolloutConfig sample_cfg = cfg;
      sample_cfg.gen.seed = ss::rng::derive_seed(seed, rec_idx * 1000003ULL + s);
      ss::rollout::Episode ep;
      try {
        ep = ss::rollout::run_episode(rec.question, *policy, external.get(), sample_cfg);
      } catch (const ss::policy::PolicyError& e) {
        std::cerr << "rollout: backend error: " << e.what() << "\n";
        return kExitBackend;
      }
      const auto breakdown =
          ss::reward::composite_reward(ep.trajectory.source, rec.golds, score_opts);
      out << ss::dataset::episode_to_json(rec.question_id, cfg.mode, ep, breakdown).dump()
          << "\n";

      ss::metrics::SampleOutcome outcome;
      outcome.answer = ep.final_answer;
      outcome.correct = breakdown.correct;
      outcome.usage = ep.usage;
      outcomes.push_back(outcome);

      em_sum += breakdown.correct ? 1.0 : 0.0;
      format_ok_count += breakdown.format_ok ? 1.0 : 0.0;
      std::size_t searches = 0;
      for (const auto& seg : ep.trajectory.segments) {
        if (seg.kind == ss::trajectory::SegmentKind::Search) ++searches;
      }
      search_sum += static_cast<double>(searches);
      token_sum += static_cast<double>(ep.usage.total_tokens);
      ++episodes;
    }

    if (samples_output) {
      const auto result = ss::metrics::SampleResult::from_samples(rec.question_id, rec.golds,
                                                                  std::move(outcomes));
      json row;
      row["question_id"] = result.question_id;
      row["n_samples"] = result.n_samples;
      row["n_correct"] = result.n_correct;
      row["golds"] = result.golds;
      samples_output->stream() << row.dump() << "\n";
    }
  }

  json summary;
  summary["episodes"] = episodes;
  summary["mean_em"] = em_sum / static_cast<double>(episodes);
  summary["avg_search"] = search_sum / static_cast<double>(episodes);
  summary["avg_tokens"] = token_sum / static_cast<double>(episodes);
  summary["format_valid_rate"] = format_ok_count / static_cast<double>(episodes);
  summary["skipped_records"] = stats.skipped;
  std::cerr << summary.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-search trajectory scoring, sampling metrics, and rollout harness"};
  app.require_subcommand(1);
  app.set_config("--config");

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "Score responses against gold answers");
  score->add_option("--in", score_args.in, "Input JSONL of {id, response, golds} ('-' = stdin)");
  score->add_option("--out", score_args.out, "Output JSONL ('-' = stdout)");
  score->add_option("--match", score_args.match, "Match mode: em|substring")
      ->check(CLI::IsMember({"em", "substring"}));
  score->add_option("--lambda-f", score_args.lambda_f, "Format weight in [0, 0.5]");

  PasskArgs passk_args;
  auto* passk = app.add_subcommand("passk", "Coverage (pass@k) over sample results");
  passk->add_option("--in", passk_args.in, "Input JSONL of {question_id, n_samples, n_correct}");
  passk->add_option("--out", passk_args.out, "Output CSV");
  passk->add_option("--k-grid", passk_args.k_grid, "Comma-separated k values (default: powers of 2)");
  passk->add_flag("--fit", passk_args.fit, "Fit the scaling law and emit the residual table");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit the coverage scaling law to (k, coverage) CSV");
  fit->add_option("--in", fit_args.in, "Input CSV of k,coverage rows");
  fit->add_option("--out", fit_args.out, "Output report");
  fit->add_flag("--percent", fit_args.percent, "Input coverages are percentages");

  RolloutArgs rollout_args;
  auto* rollout = app.add_subcommand("rollout", "Run episodes over a dataset");
  rollout->add_option("--in", rollout_args.in, "Dataset JSONL");
  rollout->add_option("--out", rollout_args.out, "Episodes JSONL");
  rollout->add_option("--samples-out", rollout_args.samples_out,
                      "Aggregated SampleResult JSONL (optional)");
  rollout->add_option("--manifest", rollout_args.manifest_path, "Write a run manifest JSON");
  rollout->add_option("--mode", rollout_args.mode, "single|multi|reflect|sim2real|entropy")
      ->check(CLI::IsMember({"single", "multi", "reflect", "sim2real", "entropy"}));
  rollout->add_option("--match", rollout_args.match, "Match mode: em|substring")
      ->check(CLI::IsMember({"em", "substring"}));
  rollout->add_option("--backend-url", rollout_args.backend_url, "OpenAI-compatible base URL");
  rollout->add_option("--model", rollout_args.model, "Backend model name");
  rollout->add_option("--corpus", rollout_args.corpus_path, "Local corpus JSONL");
  rollout->add_option("--web-fixture", rollout_args.web_fixture_path,
                      "Recorded web-search fixture JSONL");
  rollout->add_option("--replace", rollout_args.replace, "sim2real position: uptok|first|last|all")
      ->check(CLI::IsMember({"uptok", "first", "last", "all"}));
  rollout->add_flag("--mock", rollout_args.mock, "Use the deterministic mock backend");
  rollout->add_flag("--always-first-external,!--no-always-first-external",
                    rollout_args.always_first_external,
                    "Entropy mode: route the first query externally (default on)");
  rollout->add_option("--samples", rollout_args.samples, "Samples per question (K)");
  rollout->add_option("--k", rollout_args.budget_k, "sim2real substitution budget");
  rollout->add_option("--top-n", rollout_args.top_n, "Documents per information block");
  rollout->add_option("--max-turns", rollout_args.max_turns, "Turn limit N");
  rollout->add_option("--max-tokens", rollout_args.max_tokens, "Generation token limit");
  rollout->add_option("--temperature", rollout_args.temperature, "Sampling temperature");
  std::uint64_t seed_value = 0;
  auto* seed_opt = rollout->add_option("--seed", seed_value, "Base seed (required with --mock)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (seed_opt->count() > 0) rollout_args.seed = seed_value;

  try {
    if (score->parsed()) return run_score(score_args);
    if (passk->parsed()) return run_passk(passk_args);
    if (fit->parsed()) return run_fit(fit_args);
    if (rollout->parsed()) return run_rollout(rollout_args);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ss::policy::PolicyError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
