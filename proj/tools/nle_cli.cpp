#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nle/app.hpp"
#include "nle/error.hpp"
#include "nle/mock_server.hpp"
#include "nle/text_metrics.hpp"

namespace fs = std::filesystem;
using namespace nle;

namespace {

struct Overrides {
  std::string config;
  std::string dataset;
  std::string catalog;
  std::string cache_dir;
  std::string objective;
  std::string out;
  std::optional<int> workers;
  std::optional<double> alpha;
  std::optional<std::int64_t> seed;
  bool no_postprocess = false;
};

app::RunConfig resolve_config(const Overrides& o) {
  if (o.config.empty()) throw Error(ErrorCode::ConfigError, "--config is required");
  auto c = app::load_config(o.config);
  if (!o.dataset.empty()) c.dataset.path = o.dataset;
  if (!o.catalog.empty()) c.catalog = o.catalog;
  if (!o.cache_dir.empty()) c.cache_dir = fs::path(o.cache_dir);
  if (!o.objective.empty()) c.objective = selection::parse_objective(o.objective);
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.workers) c.workers = *o.workers;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.seed) c.generation.seed = *o.seed;
  if (o.no_postprocess) c.generate.postprocess = false;
  return c;
}

int check_budget(const app::CommandStats& s, std::size_t budget, std::string_view what) {
  std::cerr << what << ": " << s.rows << " rows, " << s.failed_rows << " failed\n";
  if (s.failed_rows > budget) {
    std::cerr << "error: " << s.failed_rows << " failed rows exceed the budget of " << budget << "\n";
    return 2;
  }
  return 0;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::ConfigError, "cannot write " + p.string());
  out << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MockServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Situated explanation evaluation: generate, score, select and compare prompt runs."};
  cli.require_subcommand(1);
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "run config JSON")->check(CLI::ExistingFile);
    sub->add_option("--dataset", o.dataset, "override dataset path");
    sub->add_option("--catalog", o.catalog, "override catalog path");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--cache-dir", o.cache_dir, "response cache directory");
    sub->add_option("--alpha", o.alpha, "significance level");
  };

  auto* gen = cli.add_subcommand("generate", "generate one explanation per (problem, template)");
  add_common(gen);
  gen->add_flag("--no-postprocess", o.no_postprocess, "keep text after the first blank line");
  gen->add_option("--seed", o.seed, "sampling seed");
  gen->add_option("--out", o.out, "artifact directory (default: output_dir)");

  std::string artifact_dir;
  auto* score = cli.add_subcommand("score", "score every record of an artifact");
  add_common(score);
  score->add_option("--artifact", artifact_dir, "artifact directory (default: output_dir)");

  std::string baseline;
  auto* sel = cli.add_subcommand("select", "per-instance prompt selection and relative change");
  add_common(sel);
  sel->add_option("--artifact", artifact_dir, "artifact directory (default: output_dir)");
  sel->add_option("--objective", o.objective, "metric:min|max");
  sel->add_option("--baseline", baseline, "baseline template id");

  std::vector<std::string> pair;
  std::string tsv_out;
  std::optional<std::size_t> family;
  auto* cmp = cli.add_subcommand("compare", "test a second artifact against a first, per template");
  cmp->add_option("artifacts", pair, "baseline and variant artifact directories")->expected(2)->required();
  cmp->add_option("--alpha", o.alpha, "significance level");
  cmp->add_option("--family-size", family, "Bonferroni family size (default: tests in the report)");
  cmp->add_option("--tsv", tsv_out, "also write the report as TSV");

  auto* rep = cli.add_subcommand("report", "metric means, baseline comparison and relative change");
  rep->add_option("--artifact", artifact_dir, "artifact directory")->required();
  rep->add_option("--baseline", baseline, "baseline template id");
  rep->add_option("--alpha", o.alpha, "significance level");
  rep->add_option("--family-size", family, "Bonferroni family size (default: tests in the report)");

  auto* lex = cli.add_subcommand("lexicon", "concreteness lexicon utilities");
  lex->require_subcommand(1);
  std::string lex_in, lex_out;
  int lex_column = 2;
  auto* prep = lex->add_subcommand("prepare", "rescale a rating table to a [0,1] lexicon TSV");
  prep->add_option("input", lex_in, "source TSV")->required()->check(CLI::ExistingFile);
  prep->add_option("output", lex_out, "output TSV")->required();
  prep->add_option("--column", lex_column, "1-based rating column");

  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = cli.add_subcommand("mock-serve", "serve the deterministic hash mocks over HTTP");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port");

  CLI11_PARSE(cli, argc, argv);

  try {
    if (*gen) {
      const auto c = resolve_config(o);
      app::CommandStats s;
      auto a = app::cmd_generate(c, &s);
      app::write_artifact(a, c.output_dir);
      std::cout << c.output_dir.string() << " " << a.digest << "\n";
      return check_budget(s, c.row_failure_budget, "generate");
    }
    if (*score) {
      const auto c = resolve_config(o);
      const fs::path dir = artifact_dir.empty() ? c.output_dir : fs::path(artifact_dir);
      auto a = app::read_artifact(dir);
      app::CommandStats s;
      app::cmd_score(a, c, &s);
      a.config = app::to_json(c);
      a.semantic_config = app::semantic_config(c);
      app::write_artifact(a, dir);
      std::cout << dir.string() << " " << a.digest << "\n";
      return check_budget(s, c.row_failure_budget, "score");
    }
    if (*sel) {
      std::optional<app::RunConfig> c;
      if (!o.config.empty()) c = resolve_config(o);
      const fs::path dir = !artifact_dir.empty() ? fs::path(artifact_dir) : c ? c->output_dir : fs::path();
      if (dir.empty()) throw Error(ErrorCode::ConfigError, "select needs --artifact or --config");
      auto a = app::read_artifact(dir);
      std::optional<selection::Objective> objective;
      if (!o.objective.empty()) {
        objective = selection::parse_objective(o.objective);
      } else if (c && c->objective) {
        objective = c->objective;
      } else if (a.semantic_config.value("objective", nlohmann::json()).is_string()) {
        objective = selection::parse_objective(a.semantic_config["objective"].get<std::string>());
      }
      if (!objective) throw Error(ErrorCode::ConfigError, "no objective given (--objective metric:min|max)");
      std::string base = baseline;
      if (base.empty() && c && c->baseline_template) base = *c->baseline_template;
      if (base.empty() && a.semantic_config.value("baseline_template", nlohmann::json()).is_string()) {
        base = a.semantic_config["baseline_template"].get<std::string>();
      }
      if (base.empty()) throw Error(ErrorCode::ConfigError, "no baseline template given (--baseline)");
      const double alpha = o.alpha.value_or(c ? c->alpha : a.semantic_config.value("alpha", 0.05));
      std::optional<std::size_t> fam;
      if (c) fam = c->family_size;
      app::cmd_select(a, *objective, base, alpha, fam);
      for (auto* j : {&a.config, &a.semantic_config}) {
        (*j)["objective"] = selection::to_string(*objective);
        (*j)["baseline_template"] = base;
        (*j)["alpha"] = alpha;
      }
      app::write_artifact(a, dir);
      std::cout << app::render_text(*a.relative_change);
      return 0;
    }
    if (*cmp) {
      const auto a = app::read_artifact(pair[0]);
      const auto b = app::read_artifact(pair[1]);
      const auto report = app::cmd_compare(a, b, o.alpha.value_or(0.05), family);
      std::cout << app::render_text(report);
      if (!tsv_out.empty()) write_text(tsv_out, app::render_tsv(report));
      return 0;
    }
    if (*rep) {
      const auto a = app::read_artifact(artifact_dir);
      std::string base = baseline;
      if (base.empty() && a.semantic_config.value("baseline_template", nlohmann::json()).is_string()) {
        base = a.semantic_config["baseline_template"].get<std::string>();
      }
      const double alpha = o.alpha.value_or(a.semantic_config.value("alpha", 0.05));
      std::string text = "## metric means\n" + app::render_means(a);
      if (!base.empty()) {
        const auto report = app::compare_templates(a, base, alpha, family);
        text += "\n## against baseline\n" + app::render_text(report);
        write_text(fs::path(artifact_dir) / "report.tsv", app::render_tsv(report));
      }
      if (a.relative_change) text += "\n## relative change under selection\n" + app::render_text(*a.relative_change);
      write_text(fs::path(artifact_dir) / "report.txt", text);
      std::cout << text;
      return 0;
    }
    if (*prep) {
      write_text(lex_out, text::prepare_lexicon(read_text(lex_in), lex_column));
      return 0;
    }
    if (*serve) {
      MockServer server;
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
      });
      std::cerr << "mock-serve listening on http://" << host << ":" << port << "\n";
      server.run(host, port);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::exit_code_for(e);
  }
  return 0;
}
