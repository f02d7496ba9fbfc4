#include "rtpower/design.hpp"

#include "rtpower/errors.hpp"

#include <algorithm>
#include <unordered_map>

namespace rtpower {

namespace {

const std::vector<std::string> kKnownFixedTerms = {
    "intercept", "relatedness", "setting", "setting:relatedness"};

bool known_fixed_term(const std::string& t) {
  return std::find(kKnownFixedTerms.begin(), kKnownFixedTerms.end(), t) !=
         kKnownFixedTerms.end();
}

void validate_spec(const ModelSpec& spec) {
  if (spec.fixed_terms.empty() ||
      std::find(spec.fixed_terms.begin(), spec.fixed_terms.end(), "intercept") ==
          spec.fixed_terms.end()) {
    throw ValidationError("model spec: fixed_terms must contain 'intercept'");
  }
  for (const auto& t : spec.fixed_terms) {
    if (!known_fixed_term(t)) {
      throw ValidationError("model spec: unknown fixed term '" + t + "'");
    }
    if (std::count(spec.fixed_terms.begin(), spec.fixed_terms.end(), t) > 1) {
      throw ValidationError("model spec: duplicate fixed term '" + t + "'");
    }
  }
  for (const auto& [factor, terms] : spec.random_terms) {
    if (factor != "participant" && factor != "item") {
      throw ValidationError("model spec: unknown grouping factor '" + factor + "'");
    }
    if (terms.empty()) {
      throw ValidationError("model spec: factor '" + factor + "' has no random terms");
    }
    for (const auto& t : terms) {
      if (std::find(spec.fixed_terms.begin(), spec.fixed_terms.end(), t) ==
          spec.fixed_terms.end()) {
        throw ValidationError("model spec: random term '" + t + "' for factor '" +
                              factor + "' is not a fixed term");
      }
    }
  }
}

} // namespace

ModelSpec ModelSpec::relatedness_model(Criterion criterion) {
  ModelSpec spec;
  spec.fixed_terms = {"intercept", "relatedness"};
  spec.random_terms["participant"] = {"intercept", "relatedness"};
  spec.random_terms["item"] = {"intercept", "relatedness"};
  spec.criterion = criterion;
  return spec;
}

ModelSpec ModelSpec::setting_interaction_model(Criterion criterion) {
  ModelSpec spec;
  spec.fixed_terms = {"intercept", "relatedness", "setting", "setting:relatedness"};
  spec.random_terms["participant"] = {"intercept", "relatedness"};
  spec.random_terms["item"] = {"intercept", "relatedness", "setting",
                               "setting:relatedness"};
  spec.criterion = criterion;
  return spec;
}

ModelSpec ModelSpec::matching(const Scenario& s, Criterion criterion) {
  ModelSpec spec;
  for (const auto& t : kKnownFixedTerms) {
    if (s.fixed.has(t)) spec.fixed_terms.push_back(t);
  }
  spec.random_terms["participant"] = s.by_participant.term_names;
  spec.random_terms["item"] = s.by_item.term_names;
  spec.criterion = criterion;
  return spec;
}

int DesignBundle::theta_dim() const {
  int dim = 0;
  for (const auto& f : factors) dim += f.n_params();
  return dim;
}

DesignBundle build_design(const TrialTable& table, const ModelSpec& spec,
                          const ContrastCoding& contrasts) {
  if (table.empty()) {
    throw ValidationError("build_design: trial table is empty");
  }
  validate_spec(spec);
  if (contrasts.related_code == contrasts.unrelated_code) {
    throw ValidationError("build_design: related_code and unrelated_code must differ");
  }

  const bool wants_setting =
      std::find_if(spec.fixed_terms.begin(), spec.fixed_terms.end(),
                   [](const std::string& t) {
                     return t == "setting" || t == "setting:relatedness";
                   }) != spec.fixed_terms.end();

  const long n = static_cast<long>(table.size());
  const int p = static_cast<int>(spec.fixed_terms.size());

  DesignBundle bundle;
  bundle.fixed_terms = spec.fixed_terms;
  bundle.criterion = spec.criterion;
  bundle.X.resize(n, p);
  bundle.y.resize(n);

  for (long r = 0; r < n; ++r) {
    const Trial& row = table.rows[r];
    const double rel = contrasts.condition_code(row.condition == Condition::related);
    double set = 0.0;
    if (wants_setting) {
      if (!row.setting.has_value()) {
        throw ValidationError(
            "build_design: model requests a setting term but row " +
            std::to_string(r + 1) + " has no setting");
      }
      set = contrasts.setting_code(*row.setting == Setting::online);
    }
    for (int c = 0; c < p; ++c) {
      const std::string& term = spec.fixed_terms[c];
      double v = 1.0;
      if (term == "relatedness") v = rel;
      else if (term == "setting") v = set;
      else if (term == "setting:relatedness") v = set * rel;
      bundle.X(r, c) = v;
    }
    bundle.y[r] = row.rt_ms;
  }

  // Grouping factors in fixed order: participant, then item.
  for (const char* name : {"participant", "item"}) {
    auto it = spec.random_terms.find(name);
    if (it == spec.random_terms.end()) continue;

    DesignBundle::Factor factor;
    factor.name = name;
    factor.terms = it->second;
    for (const auto& t : factor.terms) {
      auto pos = std::find(spec.fixed_terms.begin(), spec.fixed_terms.end(), t);
      factor.term_cols.push_back(
          static_cast<int>(std::distance(spec.fixed_terms.begin(), pos)));
    }

    std::unordered_map<std::string, int> level_index;
    factor.unit.resize(n);
    const bool is_participant = std::string(name) == "participant";
    for (long r = 0; r < n; ++r) {
      const std::string& label = is_participant ? table.rows[r].participant_id
                                                : table.rows[r].item_id;
      auto [pos, inserted] =
          level_index.try_emplace(label, static_cast<int>(factor.levels.size()));
      if (inserted) factor.levels.push_back(label);
      factor.unit[r] = pos->second;
    }
    bundle.factors.push_back(std::move(factor));
  }

  return bundle;
}

} // namespace rtpower
