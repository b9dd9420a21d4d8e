#include "coc/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "json.hpp"

namespace coc {

using nlohmann::json;

// Howard Hinnant's civil calendar algorithms.
std::string civil_date_string(int64_t z) {
  z += 719468;
  const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const int64_t doe = z - era * 146097;
  const int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const int64_t y = yoe + era * 400;
  const int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const int64_t mp = (5 * doy + 2) / 153;
  const int64_t d = doy - (153 * mp + 2) / 5 + 1;
  const int64_t m = mp < 10 ? mp + 3 : mp - 9;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04lld-%02lld-%02lld", static_cast<long long>(y + (m <= 2)),
                static_cast<long long>(m), static_cast<long long>(d));
  return buf;
}

int64_t parse_civil_date(const std::string& iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw IoError("malformed date '" + iso + "', expected YYYY-MM-DD");
  }
  for (size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (iso[i] < '0' || iso[i] > '9') throw IoError("malformed date '" + iso + "'");
  }
  const int y0 = std::stoi(iso.substr(0, 4));
  const int m = std::stoi(iso.substr(5, 2));
  const int d = std::stoi(iso.substr(8, 2));
  if (m < 1 || m > 12 || d < 1 || d > 31) throw IoError("out-of-range date '" + iso + "'");
  const int y = y0 - (m <= 2);
  const int64_t era = (y >= 0 ? y : y - 399) / 400;
  const int64_t yoe = y - era * 400;
  const int64_t doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const int64_t doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  const int64_t days = era * 146097 + doe - 719468;
  if (civil_date_string(days) != iso) throw IoError("invalid calendar date '" + iso + "'");
  return days;
}

namespace {

std::vector<int8_t> parse_label_vector(const json& arr, const char* field, int line) {
  if (!arr.is_array()) {
    throw IoError("line " + std::to_string(line) + ": '" + field + "' must be an array");
  }
  std::vector<int8_t> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer() || (v.get<int>() != 0 && v.get<int>() != 1)) {
      throw IoError("line " + std::to_string(line) + ": '" + field + "' entries must be 0 or 1");
    }
    out.push_back(static_cast<int8_t>(v.get<int>()));
  }
  return out;
}

}  // namespace

Corpus load_jsonl(const std::string& path, WarningSink warn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);

  Corpus corpus;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    CaseDocument doc;
    try {
      doc.case_id = j.at("case_id").get<std::string>();
      doc.date = j.at("date").get<std::string>();
    } catch (const json::exception& e) {
      throw IoError("line " + std::to_string(lineno) + ": " + e.what());
    }
    parse_civil_date(doc.date);  // validates format
    if (!seen_ids.insert(doc.case_id).second) {
      throw IoError("line " + std::to_string(lineno) + ": duplicate case_id '" + doc.case_id + "'");
    }

    doc.labels.alleged = parse_label_vector(j.at("alleged"), "alleged", lineno);
    doc.labels.violated = parse_label_vector(j.at("violated"), "violated", lineno);
    if (doc.labels.alleged.size() != doc.labels.violated.size()) {
      throw IoError("line " + std::to_string(lineno) + ": alleged and violated lengths differ");
    }
    const int k = static_cast<int>(doc.labels.alleged.size());
    if (k < 1) throw IoError("line " + std::to_string(lineno) + ": empty label vectors");
    if (corpus.cases.empty()) {
      corpus.k = k;
    } else if (k != corpus.k) {
      throw IoError("line " + std::to_string(lineno) + ": label length " + std::to_string(k) +
                    " does not match corpus k=" + std::to_string(corpus.k));
    }
    for (int i = 0; i < k; ++i) {
      if (doc.labels.violated[i] == 1 && doc.labels.alleged[i] == 0) {
        warn("case '" + doc.case_id + "': article " + std::to_string(i) +
             " marked violated but not alleged");
      }
    }

    const json& sents = j.at("sentences");
    if (!sents.is_array() || sents.empty()) {
      throw IoError("line " + std::to_string(lineno) + ": case needs at least one sentence");
    }
    for (const auto& sent : sents) {
      if (!sent.is_array() || sent.empty()) {
        throw IoError("line " + std::to_string(lineno) + ": sentence needs at least one token");
      }
      Sentence s;
      s.n = static_cast<int>(sent.size());
      for (const auto& tok : sent) {
        if (!tok.is_array()) {
          throw IoError("line " + std::to_string(lineno) + ": token embedding must be an array");
        }
        const int w = static_cast<int>(tok.size());
        if (corpus.d_e == 0) {
          if (w < 1) throw IoError("line " + std::to_string(lineno) + ": empty token embedding");
          corpus.d_e = w;
        } else if (w != corpus.d_e) {
          throw IoError("line " + std::to_string(lineno) + ": embedding width " + std::to_string(w) +
                        " does not match corpus d_e=" + std::to_string(corpus.d_e));
        }
        for (const auto& v : tok) {
          if (!v.is_number()) {
            throw IoError("line " + std::to_string(lineno) + ": non-numeric embedding entry");
          }
          s.emb.push_back(v.get<double>());
        }
      }
      doc.sentences.push_back(std::move(s));
    }
    corpus.cases.push_back(std::move(doc));
  }
  return corpus;
}

void write_jsonl(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const CaseDocument& doc : corpus.cases) {
    json sents = json::array();
    for (const Sentence& s : doc.sentences) {
      json sent = json::array();
      for (int t = 0; t < s.n; ++t) {
        json tok = json::array();
        for (int j = 0; j < corpus.d_e; ++j) {
          tok.push_back(s.emb[static_cast<size_t>(t) * corpus.d_e + j]);
        }
        sent.push_back(std::move(tok));
      }
      sents.push_back(std::move(sent));
    }
    json alleged = json::array();
    json violated = json::array();
    for (int i = 0; i < corpus.k; ++i) {
      alleged.push_back(static_cast<int>(doc.labels.alleged[static_cast<size_t>(i)]));
      violated.push_back(static_cast<int>(doc.labels.violated[static_cast<size_t>(i)]));
    }
    json j;
    j["case_id"] = doc.case_id;
    j["date"] = doc.date;
    j["sentences"] = std::move(sents);
    j["alleged"] = std::move(alleged);
    j["violated"] = std::move(violated);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("failed writing corpus: " + path);
}

SplitCorpora chronological_split(const Corpus& corpus, double train_frac, double dev_frac) {
  if (train_frac <= 0.0 || dev_frac <= 0.0 || train_frac + dev_frac >= 1.0) {
    throw ContractError("split fractions must be positive with train+dev < 1");
  }
  const int n = static_cast<int>(corpus.cases.size());
  if (n < 3) throw ContractError("need at least 3 cases to split, got " + std::to_string(n));

  std::vector<int> order(corpus.cases.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const CaseDocument& ca = corpus.cases[static_cast<size_t>(a)];
    const CaseDocument& cb = corpus.cases[static_cast<size_t>(b)];
    if (ca.date != cb.date) return ca.date < cb.date;  // ISO strings sort chronologically
    return ca.case_id < cb.case_id;
  });

  // The small epsilon absorbs binary rounding in frac*n so that e.g.
  // 0.818 * 11000 lands on 8998 rather than one short.
  const int n_train = static_cast<int>(std::floor(train_frac * n + 1e-9));
  const int n_dev = static_cast<int>(std::floor(dev_frac * n + 1e-9));

  SplitCorpora out;
  for (Corpus* c : {&out.train, &out.dev, &out.test}) {
    c->k = corpus.k;
    c->d_e = corpus.d_e;
  }
  for (int i = 0; i < n; ++i) {
    const CaseDocument& doc = corpus.cases[static_cast<size_t>(order[static_cast<size_t>(i)])];
    if (i < n_train) {
      out.train.cases.push_back(doc);
    } else if (i < n_train + n_dev) {
      out.dev.cases.push_back(doc);
    } else {
      out.test.cases.push_back(doc);
    }
  }
  return out;
}

}  // namespace coc
