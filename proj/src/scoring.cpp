#include "nle/scoring.hpp"

#include "nle/error.hpp"
#include "nle/kernels.hpp"
#include "nle/pragmatics.hpp"

namespace nle::scoring {

void TemplateCorpus::add(const std::string& template_id, const std::string& problem_id, const std::string& text) {
  by_template_[template_id].emplace_back(problem_id, text::tokenize(text));
}

std::vector<text::TokenSequence> TemplateCorpus::others(const std::string& template_id,
                                                        const std::string& problem_id) const {
  std::vector<text::TokenSequence> out;
  auto it = by_template_.find(template_id);
  if (it == by_template_.end()) return out;
  for (const auto& [pid, seq] : it->second) {
    if (pid != problem_id && !seq.empty()) out.push_back(seq);
  }
  return out;
}

std::vector<text::TokenSequence> references_for(const datasets::ProblemInstance& problem) {
  std::vector<text::TokenSequence> refs;
  if (problem.cose && problem.cose->abstractive_explanation) {
    auto seq = text::tokenize(*problem.cose->abstractive_explanation);
    if (!seq.empty()) refs.push_back(std::move(seq));
  }
  return refs;
}

namespace {

bool pragmatics_defined(const generation::ExplanationRecord& record) {
  return !record.error && !generation::trim_whitespace(record.processed_text).empty();
}

}  // namespace

MetricVector score_record(const generation::ExplanationRecord& record, const datasets::ProblemInstance& problem,
                          const ScoringContext& ctx) {
  MetricVector v;
  v.problem_id = record.problem_id;
  v.template_id = record.template_id;
  if (record.error) return v;

  const std::vector<std::string> texts{record.processed_text};
  const std::vector<std::vector<text::TokenSequence>> refs{references_for(problem)};
  kernels::LexicalInput in;
  in.texts = texts;
  in.lexicon = ctx.lexicon;
  in.references = refs;
  in.bleu_options = ctx.bleu_options;
  const auto lex = kernels::lexical_scores_serial(in).front();
  v[Metric::Length] = static_cast<double>(lex.length);
  v[Metric::Ttr] = lex.ttr;
  v[Metric::Concreteness] = lex.concreteness;
  v[Metric::Bleu] = lex.bleu;

  if (!pragmatics_defined(record)) return v;
  const std::string problem_text = datasets::problem_string(problem, ctx.format);
  if (ctx.mask_scorer != nullptr) {
    const auto s = pragmatics::convincingness(problem_text, record.processed_text, *ctx.mask_scorer);
    v[Metric::CvNo] = s.c_v_no;
    v[Metric::CvDummy] = s.c_v_dummy;
  }
  if (ctx.acceptability != nullptr) {
    v[Metric::Acceptability] = pragmatics::acceptability(problem_text, record.processed_text, *ctx.acceptability);
  }
  return v;
}

std::optional<double> score_metric(Metric metric, const generation::ExplanationRecord& record,
                                   const datasets::ProblemInstance& problem, const ScoringContext& ctx,
                                   const TemplateCorpus* corpus) {
  if (record.error) return std::nullopt;
  switch (metric) {
    case Metric::SelfBleu: {
      if (corpus == nullptr) return std::nullopt;
      const auto seq = text::tokenize(record.processed_text);
      const auto refs = corpus->others(record.template_id, record.problem_id);
      if (seq.empty() || refs.empty()) return std::nullopt;
      return text::bleu(seq, refs, ctx.bleu_options);
    }
    case Metric::CvNo:
    case Metric::CvDummy: {
      if (ctx.mask_scorer == nullptr || !pragmatics_defined(record)) return std::nullopt;
      const auto s = pragmatics::convincingness(datasets::problem_string(problem, ctx.format), record.processed_text,
                                                *ctx.mask_scorer);
      return metric == Metric::CvNo ? s.c_v_no : s.c_v_dummy;
    }
    case Metric::Acceptability:
      if (ctx.acceptability == nullptr || !pragmatics_defined(record)) return std::nullopt;
      return pragmatics::acceptability(datasets::problem_string(problem, ctx.format), record.processed_text,
                                       *ctx.acceptability);
    default: {
      ScoringContext lexical_only = ctx;
      lexical_only.mask_scorer = nullptr;
      lexical_only.acceptability = nullptr;
      return score_record(record, problem, lexical_only)[metric];
    }
  }
}

}  // namespace nle::scoring
