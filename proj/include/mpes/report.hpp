#pragma once

#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mpes/csv.hpp"
#include "mpes/model.hpp"
#include "mpes/sampler.hpp"
#include "mpes/strata.hpp"

namespace mpes {

/// A set of strata reported as one row; single strata and unions alike.
struct AggregateRow {
  std::string region;
  std::string group;
  std::string gender;  // "m", "f" or "MF"
  std::vector<std::size_t> strata;
};

/// Per-draw epidemic descriptors of a set of strata.
struct AggregateValues {
  double size = 0.0;         // share of the covered population
  double prevalence = 0.0;   // sum N rho pi / sum N rho
  double diagnosed = 0.0;    // sum N rho pi delta / sum N rho pi
  double infections = 0.0;   // sum N rho pi
  double undiagnosed = 0.0;  // sum N rho pi (1 - delta)
};

inline AggregateValues aggregate_values(const ParameterSpace& sp, const BasicState& st, const std::vector<std::size_t>& strata) {
  AggregateValues v;
  double people = 0.0, diag = 0.0;
  std::set<std::pair<std::size_t, Gender>> cells;
  double pop = 0.0;
  for (auto s : strata) {
    const double n = sp.strata.population(s);
    people += n * st.rho[s];
    v.infections += n * st.rho[s] * st.pi[s];
    diag += n * st.rho[s] * st.pi[s] * st.delta[s];
    v.undiagnosed += n * st.rho[s] * st.pi[s] * (1.0 - st.delta[s]);
    if (cells.insert({sp.strata[s].region, sp.strata[s].gender}).second) pop += n;
  }
  v.size = people / pop;
  v.prevalence = v.infections / people;
  v.diagnosed = diag / v.infections;
  return v;
}

/// Rows in reporting order: per region, each group by gender (and MF), declared aggregates,
/// then the region totals; national totals follow when there is more than one region.
inline std::vector<AggregateRow> report_rows(const ParameterSpace& sp) {
  const auto& idx = sp.strata;
  std::vector<AggregateRow> rows;
  auto add_gendered = [&](const std::string& region, const std::string& group, const std::vector<std::size_t>& strata) {
    std::vector<std::size_t> m, f;
    for (auto s : strata) (idx[s].gender == Gender::male ? m : f).push_back(s);
    if (!m.empty()) rows.push_back({region, group, "m", m});
    if (!f.empty()) rows.push_back({region, group, "f", f});
    if (!m.empty() && !f.empty()) rows.push_back({region, group, "MF", strata});
  };
  for (std::size_t r = 0; r < idx.regions().size(); ++r) {
    const auto& rid = idx.regions()[r].id;
    for (std::size_t g = 0; g < idx.groups().size(); ++g) {
      std::vector<std::size_t> strata;
      for (Gender s : {Gender::male, Gender::female})
        if (auto i = idx.find(r, g, s)) strata.push_back(*i);
      add_gendered(rid, idx.groups()[g].id, strata);
    }
    for (const auto& a : sp.config.report_aggregates) {
      std::vector<std::size_t> strata;
      for (const auto& gid : a.groups) {
        const auto g = idx.group_index(gid);
        for (Gender s : {Gender::male, Gender::female})
          if (auto i = idx.find(r, g, s)) strata.push_back(*i);
      }
      add_gendered(rid, a.id, strata);
    }
    add_gendered(rid, "Total", idx.strata_of_region(r));
  }
  if (idx.regions().size() > 1) {
    std::vector<std::size_t> all(idx.size());
    std::iota(all.begin(), all.end(), 0);
    add_gendered("ALL", "Total", all);
  }
  return rows;
}

/// Only the Total rows (per region and national).
inline std::vector<AggregateRow> total_rows(const ParameterSpace& sp) {
  std::vector<AggregateRow> out;
  for (auto& r : report_rows(sp))
    if (r.group == "Total") out.push_back(std::move(r));
  return out;
}

struct RowSummary {
  AggregateRow row;
  Summary size, prevalence, diagnosed, infections, undiagnosed;
};

/// Summaries of each row's per-draw values (quantiles of aggregates, not aggregates of quantiles).
inline std::vector<RowSummary> summarize_rows(const MpesModel& model, const PosteriorSample& sample,
                                              const std::vector<AggregateRow>& rows) {
  const auto& sp = model.space();
  std::vector<std::vector<AggregateValues>> per_row(rows.size());
  for (auto& v : per_row) v.reserve(sample.total_draws());
  auto st = make_state(sp);
  sample.for_each_draw([&](std::span<const double> u) {
    to_constrained(sp, u, st);
    for (std::size_t i = 0; i < rows.size(); ++i) per_row[i].push_back(aggregate_values(sp, st, rows[i].strata));
  });
  std::vector<RowSummary> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto pick = [&](double AggregateValues::*field) {
      std::vector<double> v;
      v.reserve(per_row[i].size());
      for (const auto& a : per_row[i]) v.push_back(a.*field);
      return summarize_values(std::move(v));
    };
    out.push_back(RowSummary{rows[i], pick(&AggregateValues::size), pick(&AggregateValues::prevalence),
                             pick(&AggregateValues::diagnosed), pick(&AggregateValues::infections),
                             pick(&AggregateValues::undiagnosed)});
  }
  return out;
}

inline std::vector<RowSummary> report_totals(const MpesModel& model, const PosteriorSample& sample) {
  return summarize_rows(model, sample, total_rows(model.space()));
}

inline void write_summary_csv(std::ostream& out, const std::vector<RowSummary>& rows) {
  std::vector<std::string> header = {"region", "group", "gender"};
  for (const char* q : {"rho", "pi", "delta", "N_rho_pi", "N_rho_pi_undiagnosed"})
    for (const char* s : {"median", "lower", "upper"}) header.push_back(std::string(q) + "_" + s);
  csv::write_row(out, header);
  for (const auto& r : rows) {
    std::vector<std::string> f = {r.row.region, r.row.group, r.row.gender};
    for (const auto* s : {&r.size, &r.prevalence, &r.diagnosed, &r.infections, &r.undiagnosed}) {
      f.push_back(csv::format_sig(s->median));
      f.push_back(csv::format_sig(s->lower));
      f.push_back(csv::format_sig(s->upper));
    }
    csv::write_row(out, f);
  }
}

struct ConvergenceRow {
  std::string name;
  std::string kind;  // "coordinate" or "basic"
  std::optional<double> rhat;
  double ess = 0.0;
  std::optional<double> acceptance;
};

/// R-hat and ESS of every sampler coordinate and of every constrained rho, pi and delta.
inline std::vector<ConvergenceRow> convergence_rows(const MpesModel& model, const PosteriorSample& sample) {
  std::vector<ConvergenceRow> out;
  for (std::size_t k = 0; k < sample.dimension(); ++k) {
    const auto chains = sample.coordinate(k);
    double acc = 0.0;
    for (const auto& c : sample.chains) acc += c.acceptance[k];
    out.push_back({sample.names[k], "coordinate", psrf(chains), ess(chains), acc / static_cast<double>(sample.chains.size())});
  }
  const auto& sp = model.space();
  const std::size_t n_strata = sp.strata.size();
  // values[param][stratum][chain][draw]
  std::vector<std::vector<std::vector<std::vector<double>>>> values(
      3, std::vector<std::vector<std::vector<double>>>(n_strata, std::vector<std::vector<double>>(sample.chains.size())));
  auto st = make_state(sp);
  for (std::size_t c = 0; c < sample.chains.size(); ++c)
    for (std::size_t i = 0; i < sample.chains[c].size(); ++i) {
      to_constrained(sp, sample.chains[c].draw(i), st);
      for (std::size_t s = 0; s < n_strata; ++s) {
        values[0][s][c].push_back(st.rho[s]);
        values[1][s][c].push_back(st.pi[s]);
        values[2][s][c].push_back(st.delta[s]);
      }
    }
  const char* names[] = {"rho", "pi", "delta"};
  for (int p = 0; p < 3; ++p)
    for (std::size_t s = 0; s < n_strata; ++s)
      out.push_back({std::string(names[p]) + "[" + sp.strata.name(s) + "]", "basic", psrf(values[p][s]), ess(values[p][s]),
                     std::nullopt});
  return out;
}

inline void write_convergence_csv(std::ostream& out, const std::vector<ConvergenceRow>& rows) {
  csv::write_row(out, {"parameter", "kind", "rhat", "ess", "acceptance"});
  for (const auto& r : rows)
    csv::write_row(out, {r.name, r.kind, r.rhat ? csv::format_sig(*r.rhat) : "undefined", csv::format_sig(r.ess),
                         r.acceptance ? csv::format_sig(*r.acceptance) : ""});
}

/// Flat table of retained unconstrained draws: chain index, then one column per coordinate.
inline void write_draws_csv(std::ostream& out, const PosteriorSample& s) {
  std::vector<std::string> header = {"chain"};
  header.insert(header.end(), s.names.begin(), s.names.end());
  csv::write_row(out, header);
  for (std::size_t c = 0; c < s.chains.size(); ++c)
    for (std::size_t i = 0; i < s.chains[c].size(); ++i) {
      out << c;
      for (double v : s.chains[c].draw(i)) out << ',' << csv::format_exact(v);
      out << '\n';
    }
}

inline PosteriorSample read_draws_csv(const std::string& path, const MpesModel& model) {
  const auto t = csv::read_file(path);
  if (t.header.empty() || t.header.front() != "chain") throw IngestionError(path + ": first column must be 'chain'");
  PosteriorSample s;
  s.names.assign(t.header.begin() + 1, t.header.end());
  if (s.names.size() != model.dimension())
    throw IngestionError(path + ": draws have " + std::to_string(s.names.size()) + " coordinates, model has " +
                         std::to_string(model.dimension()));
  for (std::size_t k = 0; k < s.names.size(); ++k)
    if (s.names[k] != model.coordinate_name(k))
      throw IngestionError(path + ": column " + std::to_string(k + 2) + " is '" + s.names[k] + "', expected '" +
                           model.coordinate_name(k) + "'");
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    long long chain;
    if (!csv::parse_int(t.rows[r][0], chain) || chain < 0)
      throw IngestionError(path + ": line " + std::to_string(t.line_of_row[r]) + ": column chain: expected an index");
    if (static_cast<std::size_t>(chain) >= s.chains.size()) s.chains.resize(static_cast<std::size_t>(chain) + 1);
    auto& c = s.chains[static_cast<std::size_t>(chain)];
    c.dim = s.names.size();
    for (std::size_t k = 1; k < t.rows[r].size(); ++k) {
      double v;
      if (!csv::parse_double(t.rows[r][k], v))
        throw IngestionError(path + ": line " + std::to_string(t.line_of_row[r]) + ": column " + t.header[k] +
                             ": not a number");
      c.draws.push_back(v);
    }
  }
  for (auto& c : s.chains) c.acceptance.assign(c.dim, 0.0);
  return s;
}

}  // namespace mpes
