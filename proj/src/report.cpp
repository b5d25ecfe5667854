// Copyright 2026 The orthosep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "orthosep/error.hpp"
#include "orthosep/metrics.hpp"

namespace orthosep {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) fail(ErrorKind::kIo, fmt::format("write to '{}' failed", path.string()));
}

std::string sir_label(double sir) { return fmt::format("{:g}", sir); }

std::string short_name(Method m) { return m == Method::kBaseline ? "DC" : "Prop."; }

}  // namespace

void write_records_csv(const std::filesystem::path& path, const std::vector<UtteranceRecord>& records) {
  auto out = open_out(path);
  out << "mixture_id,embedding_dim,method,sir_db,family_pair,sdr_target,sdr_mean,npa_db,mask_error,permutation\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{:.17g},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", r.mixture_id, r.embedding_dim,
                       to_string(r.method), r.sir_db, to_string(r.family_pair), r.sdr_target, r.sdr_mean, r.npa_db,
                       r.mask_error, fmt::join(r.permutation, " "));
  }
  finish(out, path);
}

void write_summary_csv(const std::filesystem::path& path, const MetricsReport& report) {
  auto out = open_out(path);
  out << "section,embedding_dim,method,stratum,value,count\n";
  auto line = [&](std::string_view section, int dim, std::string_view method, const std::string& stratum,
                  double value, int count) {
    out << fmt::format("{},{},{},{},{:.17g},{}\n", section, dim, method, stratum, value, count);
  };
  for (const auto& [dim, block] : report.by_dim) {
    for (const auto& [method, row] : block.rows) {
      const auto name = to_string(method);
      for (const auto& [sir, c] : row.sdr_by_sir) line("sdr_by_sir", dim, name, sir_label(sir), c.mean(), c.count);
      line("sdr_by_sir", dim, name, "avg", row.sdr_all.mean(), row.sdr_all.count);
      for (const auto& [pair, c] : row.sdr_by_pair)
        line("sdr_by_pair", dim, name, std::string(to_string(pair)), c.mean(), c.count);
      line("sdr_all_streams", dim, name, "avg", row.sdr_mean_all.mean(), row.sdr_mean_all.count);
      for (const auto& [sir, c] : row.npa_by_sir) line("npa_by_sir", dim, name, sir_label(sir), c.mean(), c.count);
      for (const auto& [sir, c] : row.error_by_sir)
        line("mask_error_by_sir", dim, name, sir_label(sir), c.mean(), c.count);
    }
    for (const auto& [sir, d] : block.sdr_delta_by_sir) line("sdr_by_sir", dim, "Improvement", sir_label(sir), d, 0);
    if (block.sdr_delta_all) line("sdr_by_sir", dim, "Improvement", "avg", *block.sdr_delta_all, 0);
    for (const auto& [pair, d] : block.sdr_delta_by_pair)
      line("sdr_by_pair", dim, "Improvement", std::string(to_string(pair)), d, 0);
    for (const auto& [sir, d] : block.improved_npa_by_sir) line("improved_npa", dim, "Improvement", sir_label(sir), d, 0);
    for (const auto& [sir, d] : block.relative_error_by_sir) {
      if (d) line("relative_error_rate_pct", dim, "Improvement", sir_label(sir), *d, 0);
      else out << fmt::format("relative_error_rate_pct,{},Improvement,{},n/a,0\n", dim, sir_label(sir));
    }
  }
  if (report.oracle_sdr) line("oracle_sdr", 0, "IBM", "avg", report.oracle_sdr->mean(), report.oracle_sdr->count);
  finish(out, path);
}

std::string format_tables(const MetricsReport& report) {
  std::ostringstream os;

  // SDR vs SIR, one block of rows per embedding dimension.
  std::set<double> sirs;
  for (const auto& [dim, block] : report.by_dim)
    for (const auto& [m, row] : block.rows)
      for (const auto& [sir, c] : row.sdr_by_sir) sirs.insert(sir);

  os << "SDR vs. SIR (target stream, dB)\n";
  os << fmt::format("{:>5} {:>7} |", "Dim.", "Meth.");
  for (double s : sirs) os << fmt::format(" {:>7}", sir_label(s));
  os << fmt::format(" | {:>7}\n", "Avg.");
  for (const auto& [dim, block] : report.by_dim) {
    for (const auto& [m, row] : block.rows) {
      os << fmt::format("{:>5} {:>7} |", dim, short_name(m));
      for (double s : sirs) {
        auto it = row.sdr_by_sir.find(s);
        os << (it == row.sdr_by_sir.end() ? fmt::format(" {:>7}", "-") : fmt::format(" {:>7.2f}", it->second.mean()));
      }
      os << fmt::format(" | {:>7.2f}\n", row.sdr_all.mean());
    }
    if (block.sdr_delta_all) {
      os << fmt::format("{:>5} {:>7} |", dim, "Imprv.");
      for (double s : sirs) {
        auto it = block.sdr_delta_by_sir.find(s);
        os << (it == block.sdr_delta_by_sir.end() ? fmt::format(" {:>7}", "-") : fmt::format(" {:>7.2f}", it->second));
      }
      os << fmt::format(" | {:>7.2f}\n", *block.sdr_delta_all);
    }
  }

  os << "\nSDR vs. family pairing (target stream, dB)\n";
  os << fmt::format("{:>5} | {:>7} {:>7} {:>7} | {:>7} {:>7} {:>7}\n", "Dim.", "DC", "Prop.", "Imprv.", "DC", "Prop.",
                    "Imprv.");
  os << fmt::format("{:>5} | {:^23} | {:^23}\n", "", "same", "mixed");
  for (const auto& [dim, block] : report.by_dim) {
    os << fmt::format("{:>5} |", dim);
    for (FamilyPair pair : {FamilyPair::kSame, FamilyPair::kMixed}) {
      for (Method m : {Method::kBaseline, Method::kProposed}) {
        auto r = block.rows.find(m);
        const CellStats* c = nullptr;
        if (r != block.rows.end()) {
          auto it = r->second.sdr_by_pair.find(pair);
          if (it != r->second.sdr_by_pair.end()) c = &it->second;
        }
        os << (c ? fmt::format(" {:>7.2f}", c->mean()) : fmt::format(" {:>7}", "-"));
      }
      auto d = block.sdr_delta_by_pair.find(pair);
      os << (d == block.sdr_delta_by_pair.end() ? fmt::format(" {:>7}", "-") : fmt::format(" {:>7.2f}", d->second));
      os << (pair == FamilyPair::kSame ? " |" : "\n");
    }
  }

  bool any_quality = false;
  for (const auto& [dim, block] : report.by_dim) any_quality |= !block.improved_npa_by_sir.empty();
  if (any_quality) {
    os << "\nMask quality vs. SIR\n";
    os << fmt::format("{:>5} {:>7} | {:>17} | {:>17}\n", "Dim.", "SIR", "Improved NPA (dB)", "Rel. error (%)");
    for (const auto& [dim, block] : report.by_dim) {
      for (const auto& [sir, d] : block.improved_npa_by_sir) {
        const auto& rel = block.relative_error_by_sir.at(sir);
        os << fmt::format("{:>5} {:>7} | {:>17.2f} | {:>17}\n", dim, sir_label(sir), d,
                          rel ? fmt::format("{:.2f}", *rel) : std::string("n/a"));
      }
    }
  }
  if (report.oracle_sdr)
    os << fmt::format("\nIdeal binary mask target SDR: {:.2f} dB over {} mixtures\n", report.oracle_sdr->mean(),
                      report.oracle_sdr->count);
  return os.str();
}

}  // namespace orthosep
