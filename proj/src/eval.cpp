#include "slotmoco/eval.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace slotmoco {

std::vector<SlotSpan> extract_spans(const std::vector<Label>& labels, const std::string& slot_type) {
  std::vector<SlotSpan> out;
  int start = -1;
  const int n = static_cast<int>(labels.size());
  for (int i = 0; i <= n; ++i) {
    Label l = i < n ? labels[static_cast<std::size_t>(i)] : Label::O;
    bool opens = l == Label::B || (l == Label::I && start < 0);
    if (start >= 0 && (l == Label::O || opens)) {
      out.push_back(SlotSpan{slot_type, start, i});
      start = -1;
    }
    if (opens) start = i;
  }
  return out;
}

F1Counts counts_to_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  F1Counts c;
  c.tp = tp;
  c.fp = fp;
  c.fn = fn;
  c.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  c.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  double pr = c.precision + c.recall;
  c.f1 = pr == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / pr;
  return c;
}

F1Counts span_f1(const std::vector<SlotSpan>& gold, const std::vector<SlotSpan>& predicted) {
  std::vector<bool> matched(gold.size(), false);
  std::int64_t tp = 0;
  for (const SlotSpan& p : predicted) {
    for (std::size_t g = 0; g < gold.size(); ++g) {
      if (!matched[g] && gold[g] == p) {
        matched[g] = true;
        ++tp;
        break;
      }
    }
  }
  return counts_to_f1(tp, static_cast<std::int64_t>(predicted.size()) - tp,
                      static_cast<std::int64_t>(gold.size()) - tp);
}

F1Report evaluate(const Predictor& predict, const Corpus& corpus,
                  const std::map<std::string, std::set<std::string>>& domain_slots) {
  F1Report report;
  double psum = 0.0, rsum = 0.0, fsum = 0.0;
  for (const std::string& domain : corpus.domains()) {
    auto it = domain_slots.find(domain);
    if (it == domain_slots.end()) {
      throw DataError("evaluate: domain \"" + domain + "\" missing from the slot-type map");
    }
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (const Utterance& utt : corpus.samples(domain)) {
      for (const std::string& slot_type : it->second) {
        std::vector<SlotSpan> gold;
        for (const SlotSpan& s : utt.spans) {
          if (s.slot_type == slot_type) gold.push_back(s);
        }
        std::vector<Label> labels = predict(slot_type, utt);
        if (labels.size() != utt.words.size()) {
          throw DataError("evaluate: predictor returned " + std::to_string(labels.size()) +
                          " labels for " + std::to_string(utt.words.size()) + " words");
        }
        F1Counts c = span_f1(gold, extract_spans(labels, slot_type));
        tp += c.tp;
        fp += c.fp;
        fn += c.fn;
      }
    }
    F1Counts counts = counts_to_f1(tp, fp, fn);
    psum += counts.precision;
    rsum += counts.recall;
    fsum += counts.f1;
    report.rows.push_back(F1Report::Row{domain, counts});
    report.average.tp += tp;
    report.average.fp += fp;
    report.average.fn += fn;
  }
  if (!report.rows.empty()) {
    double n = static_cast<double>(report.rows.size());
    report.average.precision = psum / n;
    report.average.recall = rsum / n;
    report.average.f1 = fsum / n;
  }
  return report;
}

namespace {

void csv_row(std::ostringstream& out, const std::string& name, const F1Counts& c) {
  out << name << ',' << fmt_double(c.precision) << ',' << fmt_double(c.recall) << ','
      << fmt_double(c.f1) << ',' << c.tp << ',' << c.fp << ',' << c.fn << '\n';
}

}  // namespace

std::string report_csv(const F1Report& report) {
  std::ostringstream out;
  out << "domain,precision,recall,f1,tp,fp,fn\n";
  for (const auto& row : report.rows) csv_row(out, row.domain, row.counts);
  csv_row(out, "AVERAGE", report.average);
  return out.str();
}

std::string report_table(const F1Report& report) {
  std::size_t w = 7;  // fits "AVERAGE"
  for (const auto& row : report.rows) w = std::max(w, row.domain.size());
  std::ostringstream out;
  auto pad = [&](const std::string& s) {
    out << s << std::string(w - s.size() + 2, ' ');
  };
  auto num = [&](double v) {
    std::string s = std::to_string(v).substr(0, 6);
    out << s << std::string(10 - s.size(), ' ');
  };
  pad("domain");
  out << "precision recall    f1        tp    fp    fn\n";
  auto line = [&](const std::string& name, const F1Counts& c) {
    pad(name);
    num(c.precision);
    num(c.recall);
    num(c.f1);
    out << c.tp << '\t' << c.fp << '\t' << c.fn << '\n';
  };
  for (const auto& row : report.rows) line(row.domain, row.counts);
  line("AVERAGE", report.average);
  return out.str();
}

Predictor make_crf_predictor(const EncoderParams& enc, const CrfParams& crf, const Vocab& vocab) {
  int max_len = enc.config.max_len;
  return [&enc, &crf, &vocab, max_len](const std::string& slot_type, const Utterance& utt) {
    EncodedQuery q = encode_query(vocab, slot_type, utt.words, max_len);
    EncoderOutput out = encoder_forward(enc, q);
    return viterbi(emissions(crf, out.H), crf);
  };
}

}  // namespace slotmoco
