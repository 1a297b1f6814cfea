#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msae/direct.hpp"
#include "msae/rng.hpp"
#include "msae/survey.hpp"

namespace fixture {

inline std::filesystem::path dir() { return std::filesystem::path(MSAE_FIXTURE_DIR); }

inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / "msae_tests" / name;
  std::filesystem::create_directories(p.parent_path());
  return p;
}

/// Random stratified cluster sample: every region has 1..max_strata strata
/// with 2..max_clusters clusters of 1..max_individuals respondents.
inline msae::SurveyDataset random_survey(std::uint64_t seed, int R, int C, int max_strata, int max_clusters,
                                         int max_individuals, double missing = 0.0) {
  msae::Rng rng(seed);
  auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.uniform() * (hi - lo + 1)); };
  std::vector<msae::IndividualRecord> recs;
  for (int r = 0; r < R; ++r) {
    const int H = pick(1, max_strata);
    for (int h = 0; h < H; ++h) {
      const int K = pick(2, max_clusters);
      for (int k = 0; k < K; ++k) {
        const int n = pick(1, max_individuals);
        const double w = 0.5 + 4.0 * rng.uniform();
        const double shift = rng.normal();
        for (int i = 0; i < n; ++i) {
          msae::IndividualRecord rec;
          rec.region = r;
          rec.stratum = "r" + std::to_string(r) + "s" + std::to_string(h);
          rec.cluster = rec.stratum + "k" + std::to_string(k);
          rec.weight = w * (0.8 + 0.4 * rng.uniform());
          rec.rural = h % 2 == 1;
          for (int c = 0; c < C; ++c) rec.outcomes.push_back(shift + rng.normal());
          if (missing > 0.0)
            for (int c = 0; c < C; ++c)
              if (rng.uniform() < missing) rec.outcomes[static_cast<std::size_t>(c)] = std::nan("");
          recs.push_back(std::move(rec));
        }
      }
    }
  }
  return msae::SurveyDataset(std::move(recs), C, R);
}

}  // namespace fixture
