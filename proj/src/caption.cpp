#include <algorithm>
#include <cctype>
#include <cmath>
#include <array>
#include <map>
#include <set>

#include "geoperc/error.hpp"
#include "geoperc/metrics.hpp"

namespace geoperc {
namespace {

using Tokens = std::vector<std::string>;
using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts ngrams(const Tokens& t, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= t.size(); ++i)
    ++out[std::vector<std::string>(t.begin() + static_cast<std::ptrdiff_t>(i),
                                   t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

constexpr int kMaxN = 4;
constexpr double kCiderSigma = 6.0;

struct TfIdf {
  std::array<std::map<std::vector<std::string>, double>, kMaxN> vec;
  std::array<double, kMaxN> norm{};
  std::size_t length = 0;
};

TfIdf tfidf(const Tokens& t, const std::array<std::map<std::vector<std::string>, double>, kMaxN>& df,
            double log_corpus) {
  TfIdf out;
  out.length = t.size();
  for (int n = 1; n <= kMaxN; ++n) {
    for (const auto& [g, tf] : ngrams(t, static_cast<std::size_t>(n))) {
      const auto it = df[n - 1].find(g);
      const double d = it == df[n - 1].end() ? 0.0 : it->second;
      const double w = tf * (log_corpus - std::log(std::max(1.0, d)));
      out.vec[n - 1][g] = w;
      out.norm[n - 1] += w * w;
    }
    out.norm[n - 1] = std::sqrt(out.norm[n - 1]);
  }
  return out;
}

double cider_similarity(const TfIdf& hyp, const TfIdf& ref) {
  const double delta = static_cast<double>(hyp.length) - static_cast<double>(ref.length);
  double total = 0.0;
  for (int n = 0; n < kMaxN; ++n) {
    double val = 0.0;
    for (const auto& [g, w] : hyp.vec[n]) {
      const auto it = ref.vec[n].find(g);
      if (it != ref.vec[n].end()) val += std::min(w, it->second) * it->second;
    }
    if (hyp.norm[n] != 0.0 && ref.norm[n] != 0.0) val /= hyp.norm[n] * ref.norm[n];
    val *= std::exp(-(delta * delta) / (2.0 * kCiderSigma * kCiderSigma));
    total += val;
  }
  return total / kMaxN;
}

}  // namespace

std::vector<std::string> tokenize_caption(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double corpus_bleu4(std::span<const Tokens> candidates, std::span<const std::vector<Tokens>> references) {
  if (candidates.size() != references.size())
    throw InvalidArgument("corpus_bleu4: candidate and reference counts differ");
  std::array<double, kMaxN> matched{}, total{};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    const auto& refs = references[s];
    if (refs.empty()) throw InvalidArgument("corpus_bleu4: sample without references");
    cand_len += static_cast<double>(cand.size());
    // Closest reference length; ties go to the shorter one.
    std::size_t best = refs[0].size();
    for (const auto& r : refs) {
      const auto diff = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best))
        best = r.size();
    }
    ref_len += static_cast<double>(best);
    for (int n = 1; n <= kMaxN; ++n) {
      NgramCounts max_ref;
      for (const auto& r : refs)
        for (const auto& [g, c] : ngrams(r, static_cast<std::size_t>(n)))
          max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : ngrams(cand, static_cast<std::size_t>(n))) {
        total[n - 1] += c;
        const auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[n - 1] += std::min(c, it->second);
      }
    }
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < kMaxN; ++n) {
    if (matched[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  const double bp = cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len);
  return bp * std::exp(log_sum / kMaxN);
}

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (references.empty()) throw InvalidArgument("rouge_l: no references");
  if (candidate.empty()) return 0.0;
  constexpr double beta = 1.2;
  double best_p = 0.0, best_r = 0.0;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    best_p = std::max(best_p, lcs / static_cast<double>(candidate.size()));
    best_r = std::max(best_r, lcs / static_cast<double>(ref.size()));
  }
  if (best_p == 0.0 || best_r == 0.0) return 0.0;
  return (1.0 + beta * beta) * best_p * best_r / (best_r + beta * beta * best_p);
}

std::vector<double> cider_d(std::span<const Tokens> candidates,
                            std::span<const std::vector<Tokens>> references) {
  if (candidates.size() != references.size())
    throw InvalidArgument("cider_d: candidate and reference counts differ");
  std::array<std::map<std::vector<std::string>, double>, kMaxN> df;
  for (const auto& refs : references) {
    if (refs.empty()) throw InvalidArgument("cider_d: sample without references");
    for (int n = 1; n <= kMaxN; ++n) {
      std::set<std::vector<std::string>> seen;
      for (const auto& r : refs)
        for (const auto& [g, c] : ngrams(r, static_cast<std::size_t>(n))) seen.insert(g);
      for (const auto& g : seen) df[n - 1][g] += 1.0;
    }
  }
  const double log_corpus = std::log(static_cast<double>(std::max<std::size_t>(1, references.size())));
  std::vector<double> scores;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const TfIdf hyp = tfidf(candidates[s], df, log_corpus);
    double sum = 0.0;
    for (const auto& r : references[s]) sum += cider_similarity(hyp, tfidf(r, df, log_corpus));
    scores.push_back(10.0 * sum / static_cast<double>(references[s].size()));
  }
  return scores;
}

CaptionScores caption_scores(std::span<const CaptionSample> samples, double iou_threshold) {
  if (samples.empty()) throw InvalidArgument("caption_scores: no samples");
  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  for (const auto& s : samples) {
    if (s.references.empty()) throw InvalidArgument("caption_scores: sample without references");
    cands.push_back(tokenize_caption(s.candidate));
    std::vector<Tokens> r;
    for (const auto& text : s.references) r.push_back(tokenize_caption(text));
    refs.push_back(std::move(r));
  }

  CaptionScores out;
  out.n_samples = samples.size();
  const auto cider = cider_d(cands, refs);
  std::vector<Tokens> pass_cands;
  std::vector<std::vector<Tokens>> pass_refs;
  double cider_sum = 0.0, rouge_sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(samples[i].iou >= iou_threshold)) continue;
    ++out.n_passing;
    cider_sum += cider[i];
    rouge_sum += rouge_l(cands[i], refs[i]);
    pass_cands.push_back(cands[i]);
    pass_refs.push_back(refs[i]);
  }
  const auto n = static_cast<double>(out.n_samples);
  out.cider = cider_sum / n;
  out.rouge_l = rouge_sum / n;
  out.bleu4 = out.n_passing ? corpus_bleu4(pass_cands, pass_refs) * static_cast<double>(out.n_passing) / n
                            : 0.0;
  return out;
}

}  // namespace geoperc
