#include "vergescope/regression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "vergescope/error.hpp"
#include "vergescope/fdist.hpp"

namespace vergescope::stats {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return parts;
}

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  const auto first = static_cast<unsigned char>(s[0]);
  if (!(std::isalpha(first) || s[0] == '_' || s[0] == '.')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || c == '.';
  });
}

std::set<std::string> as_set(const Term& t) { return {t.begin(), t.end()}; }

bool is_proper_subset(const Term& a, const Term& b) {
  if (a.size() >= b.size()) return false;
  const auto sb = as_set(b);
  return std::all_of(a.begin(), a.end(), [&](const std::string& v) { return sb.count(v) > 0; });
}

// Orders variables inside each term and the terms themselves; drops duplicates
// and variables that no longer appear in any term.
void canonicalize(ModelFormula& f) {
  auto pos = [&](const std::string& v) {
    return std::find(f.variables.begin(), f.variables.end(), v) - f.variables.begin();
  };
  for (auto& t : f.terms) {
    std::sort(t.begin(), t.end(), [&](const std::string& a, const std::string& b) { return pos(a) < pos(b); });
    t.erase(std::unique(t.begin(), t.end()), t.end());
  }
  auto key = [&](const Term& t) {
    std::vector<std::ptrdiff_t> k;
    k.reserve(t.size());
    for (const auto& v : t) k.push_back(pos(v));
    return std::pair(t.size(), k);
  };
  std::sort(f.terms.begin(), f.terms.end(), [&](const Term& a, const Term& b) { return key(a) < key(b); });
  f.terms.erase(std::unique(f.terms.begin(), f.terms.end()), f.terms.end());

  std::vector<std::string> used;
  for (const auto& v : f.variables) {
    const bool present = std::any_of(f.terms.begin(), f.terms.end(), [&](const Term& t) {
      return std::find(t.begin(), t.end(), v) != t.end();
    });
    if (present) used.push_back(v);
  }
  f.variables = std::move(used);
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- DataTable

void DataTable::check_rows(std::size_t n, const std::string& name) {
  if (empty_) {
    rows_ = n;
    empty_ = false;
  } else if (n != rows_) {
    throw Error(ErrorCode::DegenerateInput, "column '" + name + "' has " + std::to_string(n) + " rows, expected " +
                                                std::to_string(rows_));
  }
}

void DataTable::add_numeric(const std::string& name, std::vector<double> values) {
  check_rows(values.size(), name);
  columns_[name] = std::move(values);
}

void DataTable::add_categorical(const std::string& name, const std::vector<std::string>& values,
                                const std::vector<std::string>& level_order) {
  check_rows(values.size(), name);
  std::vector<std::string> order = level_order;
  if (order.empty()) {
    for (const auto& v : values)
      if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
  }
  Categorical cat;
  for (const auto& lvl : order)
    if (std::find(values.begin(), values.end(), lvl) != values.end()) cat.levels.push_back(lvl);
  cat.codes.reserve(values.size());
  for (const auto& v : values) {
    const auto it = std::find(cat.levels.begin(), cat.levels.end(), v);
    if (it == cat.levels.end())
      throw Error(ErrorCode::UnknownLevel, "level '" + v + "' of '" + name + "' is not in the level order");
    cat.codes.push_back(static_cast<int>(it - cat.levels.begin()));
  }
  columns_[name] = std::move(cat);
}

const Column& DataTable::column(const std::string& name) const {
  const auto it = columns_.find(name);
  if (it == columns_.end()) throw Error(ErrorCode::Lookup, "no column named '" + name + "'");
  return it->second;
}

const std::vector<double>& DataTable::numeric(const std::string& name) const {
  const auto* v = std::get_if<std::vector<double>>(&column(name));
  if (!v) throw Error(ErrorCode::InvalidModel, "column '" + name + "' is categorical, numeric expected");
  return *v;
}

// ------------------------------------------------------------- ModelFormula

std::string term_name(const Term& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ':';
    s += t[i];
  }
  return s;
}

ModelFormula ModelFormula::parse(std::string_view text) {
  const auto tilde = text.find('~');
  if (tilde == std::string_view::npos) throw Error(ErrorCode::Parse, "formula needs '~': " + std::string(text));
  ModelFormula f;
  f.response = trim(text.substr(0, tilde));
  if (!valid_identifier(f.response)) throw Error(ErrorCode::Parse, "bad response name in: " + std::string(text));

  auto note = [&](const std::string& v) {
    if (!valid_identifier(v)) throw Error(ErrorCode::Parse, "bad variable '" + v + "' in: " + std::string(text));
    if (v == f.response) throw Error(ErrorCode::Parse, "response used as predictor in: " + std::string(text));
    if (std::find(f.variables.begin(), f.variables.end(), v) == f.variables.end()) f.variables.push_back(v);
  };

  const std::string rhs = trim(text.substr(tilde + 1));
  if (rhs.empty()) throw Error(ErrorCode::Parse, "empty right-hand side: " + std::string(text));
  for (const auto& chunk : split(rhs, '+')) {
    if (chunk.empty()) throw Error(ErrorCode::Parse, "dangling '+' in: " + std::string(text));
    if (chunk == "1") continue;
    std::vector<Term> factors;
    for (const auto& factor : split(chunk, '*')) {
      Term t;
      for (const auto& v : split(factor, ':')) {
        note(v);
        t.push_back(v);
      }
      factors.push_back(std::move(t));
    }
    if (factors.size() > 16) throw Error(ErrorCode::Parse, "too many factors in one product");
    const std::size_t combos = std::size_t{1} << factors.size();
    for (std::size_t mask = 1; mask < combos; ++mask) {
      Term t;
      for (std::size_t i = 0; i < factors.size(); ++i)
        if (mask & (std::size_t{1} << i)) t.insert(t.end(), factors[i].begin(), factors[i].end());
      f.terms.push_back(std::move(t));
    }
  }
  canonicalize(f);
  return f;
}

std::string ModelFormula::to_string() const {
  std::string out = response + " ~ ";
  if (terms.empty()) return out + "1";

  auto pos = [&](const std::string& v) {
    return std::find(variables.begin(), variables.end(), v) - variables.begin();
  };
  std::vector<bool> covered(terms.size(), false);
  struct Group {
    std::ptrdiff_t order;
    std::string text;
  };
  std::vector<Group> groups;

  for (std::size_t i = 0; i < terms.size(); ++i) {
    const Term& m = terms[i];
    const bool maximal = std::none_of(terms.begin(), terms.end(), [&](const Term& o) { return is_proper_subset(m, o); });
    if (!maximal || m.size() < 2) continue;
    // full factorial over m's variables?
    const std::size_t combos = std::size_t{1} << m.size();
    std::vector<std::size_t> members;
    bool full = true;
    for (std::size_t mask = 1; mask < combos && full; ++mask) {
      Term sub;
      for (std::size_t b = 0; b < m.size(); ++b)
        if (mask & (std::size_t{1} << b)) sub.push_back(m[b]);
      const auto it = std::find(terms.begin(), terms.end(), sub);
      if (it == terms.end()) full = false;
      else members.push_back(static_cast<std::size_t>(it - terms.begin()));
    }
    if (!full) continue;
    for (auto k : members) covered[k] = true;
    std::string text;
    for (std::size_t b = 0; b < m.size(); ++b) text += (b ? " * " : "") + m[b];
    groups.push_back({pos(m[0]), text});
  }
  for (std::size_t i = 0; i < terms.size(); ++i)
    if (!covered[i]) groups.push_back({pos(terms[i][0]) + static_cast<std::ptrdiff_t>(terms[i].size()) * 1000,
                                       term_name(terms[i])});
  std::stable_sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.order < b.order; });
  for (std::size_t g = 0; g < groups.size(); ++g) out += (g ? " + " : "") + groups[g].text;
  return out;
}

bool ModelFormula::has_term(const Term& t) const {
  const auto st = as_set(t);
  return std::any_of(terms.begin(), terms.end(), [&](const Term& o) { return as_set(o) == st; });
}

bool ModelFormula::is_subset_of(const ModelFormula& other) const {
  if (response != other.response) return false;
  return std::all_of(terms.begin(), terms.end(), [&](const Term& t) { return other.has_term(t); });
}

bool ModelFormula::satisfies_marginality() const {
  for (const auto& t : terms) {
    if (t.size() < 2) continue;
    const std::size_t combos = std::size_t{1} << t.size();
    for (std::size_t mask = 1; mask + 1 < combos; ++mask) {
      Term sub;
      for (std::size_t b = 0; b < t.size(); ++b)
        if (mask & (std::size_t{1} << b)) sub.push_back(t[b]);
      if (!has_term(sub)) return false;
    }
  }
  return true;
}

std::vector<Term> ModelFormula::droppable_terms() const {
  std::vector<Term> out;
  for (const auto& t : terms)
    if (std::none_of(terms.begin(), terms.end(), [&](const Term& o) { return is_proper_subset(t, o); }))
      out.push_back(t);
  return out;
}

ModelFormula ModelFormula::without(const Term& t) const {
  ModelFormula f = *this;
  const auto st = as_set(t);
  std::erase_if(f.terms, [&](const Term& o) { return as_set(o) == st; });
  canonicalize(f);
  return f;
}

ModelFormula ModelFormula::without_variable(const std::string& name) const {
  ModelFormula f = *this;
  std::erase_if(f.terms, [&](const Term& o) { return std::find(o.begin(), o.end(), name) != o.end(); });
  canonicalize(f);
  return f;
}

bool ModelFormula::operator==(const ModelFormula& o) const {
  return response == o.response && terms.size() == o.terms.size() && is_subset_of(o);
}

// ------------------------------------------------------------ design matrix

DesignMatrix build_design_matrix(const DataTable& table, const ModelFormula& formula) {
  const std::size_t n = table.rows();
  struct Col {
    std::string name;
    std::vector<double> v;
  };
  std::vector<Col> cols;
  cols.push_back({"(Intercept)", std::vector<double>(n, 1.0)});

  for (const auto& term : formula.terms) {
    std::vector<Col> acc{{"", std::vector<double>(n, 1.0)}};
    for (const auto& var : term) {
      const Column& c = table.column(var);
      std::vector<Col> next;
      if (const auto* num = std::get_if<std::vector<double>>(&c)) {
        for (auto& a : acc) {
          Col out{a.name.empty() ? var : a.name + ":" + var, a.v};
          for (std::size_t r = 0; r < n; ++r) out.v[r] *= (*num)[r];
          next.push_back(std::move(out));
        }
      } else {
        const auto& cat = std::get<Categorical>(c);
        // earlier variables vary fastest across the generated columns
        for (std::size_t lvl = 1; lvl < cat.levels.size(); ++lvl) {
          const std::string label = var + cat.levels[lvl];
          for (auto& a : acc) {
            Col out{a.name.empty() ? label : a.name + ":" + label, a.v};
            for (std::size_t r = 0; r < n; ++r)
              if (cat.codes[r] != static_cast<int>(lvl)) out.v[r] = 0.0;
            next.push_back(std::move(out));
          }
        }
      }
      acc = std::move(next);
    }
    for (auto& a : acc) cols.push_back(std::move(a));
  }

  DesignMatrix m;
  m.n = n;
  m.p = cols.size();
  m.data.reserve(n * m.p);
  for (auto& c : cols) {
    m.names.push_back(std::move(c.name));
    m.data.insert(m.data.end(), c.v.begin(), c.v.end());
  }
  return m;
}

// --------------------------------------------------------------------- OLS

double FitResult::aic() const {
  const double nn = static_cast<double>(n);
  return nn * std::log(rss / nn) + 2.0 * static_cast<double>(coefficients.size());
}

double FitResult::coefficient(const std::string& name) const {
  for (std::size_t i = 0; i < coefficient_names.size(); ++i)
    if (coefficient_names[i] == name) return coefficients[i];
  throw Error(ErrorCode::Lookup, "no coefficient named '" + name + "'");
}

FitResult ols_fit(const DataTable& table, const ModelFormula& formula) {
  const auto& y = table.numeric(formula.response);
  DesignMatrix x = build_design_matrix(table, formula);
  const std::size_t n = x.n;
  const std::size_t p = x.p;
  if (n <= p)
    throw Error(ErrorCode::SingularDesign, "need more rows (" + std::to_string(n) + ") than coefficients (" +
                                               std::to_string(p) + ") for " + formula.to_string());
  for (double v : y)
    if (!std::isfinite(v)) throw Error(ErrorCode::DegenerateInput, "non-finite response value");

  std::vector<double> a = x.data;
  std::vector<double> qty = y;
  std::vector<double> diag(p);
  for (std::size_t k = 0; k < p; ++k) {
    double* col = a.data() + k * n;
    double orig = 0.0;
    for (std::size_t r = 0; r < n; ++r) orig += x.data[k * n + r] * x.data[k * n + r];
    orig = std::sqrt(orig);
    double norm = 0.0;
    for (std::size_t r = k; r < n; ++r) norm += col[r] * col[r];
    norm = std::sqrt(norm);
    if (orig == 0.0 || norm <= 1e-9 * orig)
      throw Error(ErrorCode::SingularDesign,
                  "design is rank deficient at column '" + x.names[k] + "' for " + formula.to_string());
    const double alpha = col[k] > 0.0 ? -norm : norm;
    // v = x - alpha e1 stored in place; H = I - 2 v v' / v'v
    col[k] -= alpha;
    double vtv = 0.0;
    for (std::size_t r = k; r < n; ++r) vtv += col[r] * col[r];
    auto reflect = [&](double* target) {
      double s = 0.0;
      for (std::size_t r = k; r < n; ++r) s += col[r] * target[r];
      s = 2.0 * s / vtv;
      for (std::size_t r = k; r < n; ++r) target[r] -= s * col[r];
    };
    for (std::size_t j = k + 1; j < p; ++j) reflect(a.data() + j * n);
    reflect(qty.data());
    diag[k] = alpha;
  }

  std::vector<double> beta(p);
  for (std::size_t i = p; i-- > 0;) {
    double s = qty[i];
    for (std::size_t j = i + 1; j < p; ++j) s -= a[j * n + i] * beta[j];
    beta[i] = s / diag[i];
  }

  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double tss = 0.0;
  double rss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double fitted = 0.0;
    for (std::size_t j = 0; j < p; ++j) fitted += x.at(r, j) * beta[j];
    const double e = y[r] - fitted;
    rss += e * e;
    tss += (y[r] - mean) * (y[r] - mean);
  }

  FitResult fit;
  fit.formula = formula;
  fit.coefficient_names = std::move(x.names);
  fit.coefficients = std::move(beta);
  fit.n = n;
  fit.residual_df = static_cast<int>(n - p);
  fit.tss = tss;
  if (formula.terms.empty() || tss == 0.0) {
    fit.rss = formula.terms.empty() ? tss : rss;
    fit.r_squared = 0.0;
  } else {
    fit.rss = rss;
    fit.r_squared = std::clamp(1.0 - rss / tss, 0.0, 1.0);
  }
  return fit;
}

// ------------------------------------------------------------------ F tests

double f_statistic(double r2_smaller, double r2_larger, int delta_df, double r2_complete, int df_complete) {
  if (delta_df <= 0) return 0.0;
  if (df_complete <= 0) throw Error(ErrorCode::Domain, "complete model has no residual degrees of freedom");
  const double num = std::max(0.0, r2_larger - r2_smaller) / delta_df;
  const double den = (1.0 - r2_complete) / df_complete;
  if (den <= 0.0) return num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return num / den;
}

double f_p_value(double f, int delta_df, int df_complete) {
  if (delta_df <= 0 || f <= 0.0) return 1.0;
  return std::clamp(f_survival(f, delta_df, df_complete), 0.0, 1.0);
}

ModelComparison nested_f_test(const FitResult& smaller, const FitResult& larger, const FitResult& complete) {
  if (smaller.n != larger.n || larger.n != complete.n)
    throw Error(ErrorCode::Nesting, "models were fit on different rows");
  if (!smaller.formula.is_subset_of(larger.formula) || !larger.formula.is_subset_of(complete.formula))
    throw Error(ErrorCode::Nesting, "'" + smaller.formula.to_string() + "' is not nested in '" +
                                        larger.formula.to_string() + "' within '" + complete.formula.to_string() +
                                        "'");
  ModelComparison c{smaller, larger, complete, smaller.residual_df - larger.residual_df, 0.0, 1.0};
  if (c.delta_df < 0) throw Error(ErrorCode::Nesting, "smaller model has fewer residual degrees of freedom");
  c.f_stat = f_statistic(smaller.r_squared, larger.r_squared, c.delta_df, complete.r_squared, complete.residual_df);
  c.p_value = f_p_value(c.f_stat, c.delta_df, complete.residual_df);
  return c;
}

std::string format_p(double p) {
  if (p < 0.001) return "<0.001";
  return format_fixed(p, 3);
}

std::string significance_class(double p) {
  if (p < 0.001) return "<0.001";
  if (p < 0.01) return "<0.01";
  if (p < 0.05) return "<0.05";
  return "n.s.";
}

// ----------------------------------------------------------------- stepwise

StepwiseResult stepwise_refine(const DataTable& table, const ModelFormula& complete,
                               const StepwiseOptions& options) {
  if (!complete.satisfies_marginality())
    throw Error(ErrorCode::InvalidModel, "complete formula violates marginality: " + complete.to_string());
  StepwiseResult result;
  result.complete = ols_fit(table, complete);
  FitResult current = result.complete;

  for (;;) {
    const auto droppable = current.formula.droppable_terms();
    if (droppable.empty()) break;
    Step step;
    step.current = current.formula;
    step.current_aic = current.aic();
    for (const auto& term : droppable) {
      StepCandidate c;
      c.term = term;
      c.fit = ols_fit(table, current.formula.without(term));
      const auto s = nested_f_test(c.fit, current, result.complete);
      const auto cum = nested_f_test(c.fit, result.complete, result.complete);
      c.f_step = s.f_stat;
      c.p_step = s.p_value;
      c.f_cumulative = cum.f_stat;
      c.p_cumulative = cum.p_value;
      c.aic = c.fit.aic();
      if (options.criterion == StepCriterion::FTest)
        c.eligible = c.p_step >= options.alpha && c.p_cumulative >= options.alpha;
      else
        c.eligible = c.aic < step.current_aic - 1e-7;
      step.candidates.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < step.candidates.size(); ++i) {
      const auto& c = step.candidates[i];
      if (!c.eligible) continue;
      if (!step.chosen) {
        step.chosen = i;
        continue;
      }
      const auto& best = step.candidates[*step.chosen];
      const bool better = options.criterion == StepCriterion::FTest
                              ? (c.p_step > best.p_step || (c.p_step == best.p_step && c.f_step < best.f_step))
                              : c.aic < best.aic;
      if (better) step.chosen = i;
    }
    const auto chosen = step.chosen;
    if (chosen) current = step.candidates[*chosen].fit;
    result.trace.push_back(std::move(step));
    if (!chosen) break;
  }
  result.selected = current;
  return result;
}

std::optional<ReducedModel> next_reduced_model(const DataTable& table, const FitResult& fitted,
                                               const FitResult& complete) {
  std::optional<ReducedModel> best;
  for (const auto& var : fitted.formula.variables) {
    ReducedModel cand;
    cand.removed_variable = var;
    cand.fit = ols_fit(table, fitted.formula.without_variable(var));
    cand.comparison = nested_f_test(cand.fit, fitted, complete);
    if (!best || cand.comparison.p_value > best->comparison.p_value ||
        (cand.comparison.p_value == best->comparison.p_value && cand.comparison.f_stat < best->comparison.f_stat))
      best = std::move(cand);
  }
  return best;
}

// ------------------------------------------------------- comparison tables

ModelRow model_row(const std::string& tag, const FitResult& fit) {
  ModelRow row;
  row.tag = tag;
  row.formula = fit.formula.to_string();
  row.r_squared = fit.r_squared;
  row.residual_df = fit.residual_df;
  return row;
}

void fill_comparisons(std::vector<ModelRow>& rows) {
  if (rows.empty()) return;
  const ModelRow& ref = rows.front();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ModelRow& r = rows[i];
    const int ddf = r.residual_df - rows[i - 1].residual_df;
    r.delta_df = ddf;
    r.f = f_statistic(r.r_squared, rows[i - 1].r_squared, ddf, ref.r_squared, ref.residual_df);
    r.p = f_p_value(*r.f, ddf, ref.residual_df);
  }
}

std::vector<Share> variance_attribution(const std::vector<ModelRow>& rows, const std::vector<ShareSpec>& specs) {
  auto r2 = [&](const std::string& tag) {
    for (const auto& r : rows)
      if (r.tag == tag) return r.r_squared;
    throw Error(ErrorCode::Lookup, "no model tagged '" + tag + "' in the comparison table");
  };
  std::vector<Share> out;
  for (const auto& s : specs) {
    const double den = r2(s.denominator);
    if (den == 0.0)
      throw Error(ErrorCode::UndefinedShare, "share '" + s.label + "' divides by R2 = 0 of '" + s.denominator + "'");
    double num = r2(s.numerator);
    std::string def;
    if (s.subtract.empty()) {
      def = s.numerator + "/" + s.denominator;
    } else {
      num -= r2(s.subtract);
      def = "(" + s.numerator + "-" + s.subtract + ")/" + s.denominator;
    }
    out.push_back({s.label, def, num / den});
  }
  return out;
}

Correlation pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorCode::Domain, "correlation needs equal-length inputs");
  if (x.size() < 3) throw Error(ErrorCode::Domain, "correlation needs at least 3 pairs");
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::UndefinedCorrelation, "zero variance in correlation input");
  Correlation c;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  c.r_squared = c.r * c.r;
  c.n = x.size();
  return c;
}

}  // namespace vergescope::stats
