#include "tscac/review.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "tscac/dataset_io.hpp"
#include "tscac/errors.hpp"
#include "tscac/seeding.hpp"

namespace tscac {

namespace {

constexpr std::uint64_t kHashRoot = 0x7265766965777321ULL;
constexpr std::size_t kAspects = kReviewScores - 1;
constexpr double kRepeatPenalty = 0.5;
constexpr double kSharedQuality = 0.5;
constexpr double kOwnQuality = 0.35;
constexpr double kSharedAppeal = 0.8;
constexpr double kOwnAppeal = 0.6;

double clamp_score(double x) { return std::clamp(x, 1.0, 5.0); }

struct ReviewWorld {
  std::vector<std::vector<std::vector<double>>> aspect_vec;  // [aspect][item][latent]
  std::vector<std::vector<double>> aspect_base;              // [aspect][item]
  std::vector<double> overall_bias;                          // [item]
  std::vector<double> aspect_weight;                         // [aspect]
  std::vector<double> popularity;                            // [item]
  std::vector<std::vector<double>> choice_vec;               // [item][latent]
};

ReviewWorld make_world(const ReviewDatasetConfig& c) {
  Rng rng = make_rng(derive_seed(c.seed, "review/latent"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double vs = 1.2 / std::sqrt(static_cast<double>(c.latent_dim));
  ReviewWorld w;
  w.aspect_vec.assign(kAspects, std::vector<std::vector<double>>(
                                    c.n_items, std::vector<double>(c.latent_dim)));
  w.aspect_base.assign(kAspects, std::vector<double>(c.n_items));
  // A hotel's aspects share a general quality and a general appeal to each
  // customer on top of their own parts.
  std::vector<double> quality(c.n_items);
  std::vector<std::vector<double>> appeal(c.n_items, std::vector<double>(c.latent_dim));
  for (std::size_t j = 0; j < c.n_items; ++j) {
    quality[j] = kSharedQuality * normal(rng);
    for (auto& v : appeal[j]) v = vs * normal(rng);
  }
  for (std::size_t a = 0; a < kAspects; ++a) {
    for (std::size_t j = 0; j < c.n_items; ++j) {
      for (std::size_t d = 0; d < c.latent_dim; ++d) {
        w.aspect_vec[a][j][d] = kSharedAppeal * appeal[j][d] + kOwnAppeal * vs * normal(rng);
      }
      w.aspect_base[a][j] = quality[j] + kOwnQuality * normal(rng);
    }
  }
  w.overall_bias.resize(c.n_items);
  for (auto& b : w.overall_bias) b = 0.1 * normal(rng);
  w.aspect_weight.resize(kAspects);
  for (auto& x : w.aspect_weight) x = 0.2 + unif(rng);
  w.popularity.resize(c.n_items);
  w.choice_vec.assign(c.n_items, std::vector<double>(c.latent_dim));
  for (std::size_t j = 0; j < c.n_items; ++j) {
    w.popularity[j] = 0.7 * normal(rng);
    for (auto& v : w.choice_vec[j]) v = normal(rng) / std::sqrt(static_cast<double>(c.latent_dim));
  }
  return w;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

bool recently_seen(const std::vector<std::size_t>& items, std::size_t window, std::size_t j) {
  const std::size_t n = items.size();
  for (std::size_t w = 0; w < window && w < n; ++w) {
    if (items[n - 1 - w] == j) return true;
  }
  return false;
}

}  // namespace

void ReviewDatasetConfig::validate() const {
  if (n_users == 0 || n_items == 0) throw InvalidArgument("review: n_users and n_items must be positive");
  if (m != kReviewScores) throw InvalidArgument("review: m is fixed at 8 scores");
  if (min_trajectory_length == 0) throw InvalidArgument("review: min_trajectory_length must be positive");
  if (history_window == 0) throw InvalidArgument("review: history_window must be positive");
  const auto [lo, hi] = review_length_range;
  if (lo == 0 || lo > hi) throw InvalidArgument("review: length range must satisfy 1 <= min <= max");
  if (id_dim == 0 || latent_dim == 0) throw InvalidArgument("review: id_dim and latent_dim must be positive");
  if (!(behavior_uniform_mix > 0.0 && behavior_uniform_mix <= 1.0)) {
    throw InvalidArgument("review: behavior_uniform_mix must lie in (0, 1] so every hotel has support");
  }
  if (!(behavior_sharpness >= 0.0)) throw InvalidArgument("review: behavior_sharpness must be >= 0");
  if (!(score_noise_std >= 0.0)) throw InvalidArgument("review: score_noise_std must be >= 0");
}

std::vector<double> hashed_embedding(std::string_view kind, std::string_view id, std::size_t dim) {
  Rng rng = make_rng(derive_seed(derive_seed(kHashRoot, kind), id));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> out(dim);
  for (auto& v : out) v = unif(rng);
  return out;
}

std::vector<double> encode_review_state(const ReviewEncoding& enc, const std::string& user_id,
                                        std::span<const std::size_t> items,
                                        std::span<const std::vector<double>> scores,
                                        std::size_t t) {
  if (t > items.size() || items.size() != scores.size()) {
    throw DimensionError("review state: history shorter than step index");
  }
  std::vector<double> f = hashed_embedding("user", user_id, enc.id_dim);
  f.reserve(enc.state_dim());
  for (std::size_t w = 0; w < enc.history_window; ++w) {
    if (w < t) {
      const std::size_t idx = t - 1 - w;
      const auto e = hashed_embedding("item", std::to_string(items[idx]), enc.id_dim);
      f.insert(f.end(), e.begin(), e.end());
      if (scores[idx].size() != kReviewScores) throw DimensionError("review state: expected 8 scores");
      for (double s : scores[idx]) f.push_back((s - 3.0) / 2.0);
    } else {
      f.insert(f.end(), enc.id_dim + kReviewScores, 0.0);
    }
  }
  return f;
}

ReplayDataset generate_review_dataset(const ReviewDatasetConfig& config) {
  config.validate();
  const ReviewWorld world = make_world(config);
  const ReviewEncoding enc{config.id_dim, config.history_window};
  Rng rng = make_rng(derive_seed(config.seed, "review/sessions"));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length(config.review_length_range.first,
                                                    config.review_length_range.second);
  const std::size_t n = config.n_items;

  ReplayDataset ds;
  ds.m = kReviewScores;
  ds.metadata["source"] = "review";
  ds.metadata["n_items"] = std::to_string(n);
  ds.metadata["review_seed"] = std::to_string(config.seed);

  std::size_t total = 0;
  for (std::size_t u = 0; u < config.n_users && total < config.n_reviews; ++u) {
    const std::string user_id = "u" + std::to_string(u);
    std::vector<double> latent(config.latent_dim);
    for (auto& v : latent) v = normal(rng);
    const std::size_t len = std::min(length(rng), config.n_reviews - total);
    total += len;

    std::vector<std::size_t> items;
    std::vector<std::vector<double>> scores;
    std::vector<double> probs_logged;
    for (std::size_t t = 0; t < len; ++t) {
      std::vector<double> logit(n);
      for (std::size_t j = 0; j < n; ++j) {
        logit[j] = config.behavior_sharpness *
                   (world.popularity[j] + dot(latent, world.choice_vec[j]) -
                    (recently_seen(items, config.history_window, j) ? 1.0 : 0.0));
      }
      const double mx = *std::max_element(logit.begin(), logit.end());
      double z = 0.0;
      for (auto& l : logit) z += (l = std::exp(l - mx));
      std::vector<double> probs(n);
      for (std::size_t j = 0; j < n; ++j) {
        probs[j] = (1.0 - config.behavior_uniform_mix) * logit[j] / z +
                   config.behavior_uniform_mix / static_cast<double>(n);
      }
      const double draw = unif(rng);
      std::size_t a = n - 1;
      double cum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        cum += probs[j];
        if (draw < cum) {
          a = j;
          break;
        }
      }
      const bool repeat = recently_seen(items, config.history_window, a);
      std::vector<double> s(kReviewScores);
      double wsum = 0.0, wtot = 0.0;
      for (std::size_t k = 0; k < kAspects; ++k) {
        const double x = world.aspect_base[k][a] + dot(latent, world.aspect_vec[k][a]) -
                         (repeat ? kRepeatPenalty : 0.0) + config.score_noise_std * normal(rng);
        s[k + 1] = clamp_score(3.0 + 0.8 * x);
        wsum += world.aspect_weight[k] * s[k + 1];
        wtot += world.aspect_weight[k];
      }
      s[0] = clamp_score(wsum / wtot + world.overall_bias[a] + config.score_noise_std * normal(rng));
      items.push_back(a);
      scores.push_back(std::move(s));
      probs_logged.push_back(probs[a]);
    }

    Trajectory traj;
    traj.session_id = user_id;
    for (std::size_t t = 0; t < len; ++t) {
      Transition tr;
      tr.state = StateVec{encode_review_state(enc, user_id, items, scores, t), false};
      tr.action = ActionEmbed::one_hot(n, items[t]);
      tr.action_index = items[t];
      tr.behavior_prob = probs_logged[t];
      tr.response = ResponseVector{scores[t]};
      tr.done = t + 1 == len;
      tr.next_state = tr.done ? StateVec{std::vector<double>(enc.state_dim(), 0.0), true}
                              : StateVec{encode_review_state(enc, user_id, items, scores, t + 1), false};
      traj.transitions.push_back(std::move(tr));
    }
    if (!traj.transitions.empty()) ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

ReplayDataset prepare_review_dataset(ReplayDataset raw, const ReviewLoadOptions& options) {
  if (raw.m != kReviewScores) {
    throw DimensionError("review dataset: expected m = 8 scores, got " + std::to_string(raw.m));
  }
  const auto& enc = options.encoding;
  ReplayDataset out;
  out.m = raw.m;
  out.metadata = raw.metadata;
  out.metadata["min_trajectory_length"] = std::to_string(options.min_trajectory_length);
  for (auto& traj : raw.trajectories) {
    if (traj.transitions.size() < options.min_trajectory_length) continue;
    std::vector<std::size_t> items;
    std::vector<std::vector<double>> scores;
    for (const auto& tr : traj.transitions) {
      if (!tr.action_index) {
        throw IoError("review dataset: session '" + traj.session_id + "' has a step without a hotel id");
      }
      items.push_back(*tr.action_index);
      scores.push_back(tr.response.values);
    }
    const std::size_t len = items.size();
    for (std::size_t t = 0; t < len; ++t) {
      auto& tr = traj.transitions[t];
      tr.state = StateVec{encode_review_state(enc, traj.session_id, items, scores, t), false};
      tr.next_state = tr.done ? StateVec{std::vector<double>(enc.state_dim(), 0.0), true}
                              : StateVec{encode_review_state(enc, traj.session_id, items, scores, t + 1), false};
    }
    out.trajectories.push_back(std::move(traj));
  }
  out.validate();
  return out;
}

ReplayDataset load_review_dataset(std::istream& is, const ReviewLoadOptions& options) {
  return prepare_review_dataset(read_dataset(is), options);
}

ReplayDataset load_review_dataset(const std::filesystem::path& path, const ReviewLoadOptions& options) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open review dataset '" + path.string() + "'");
  return load_review_dataset(is, options);
}

std::vector<double> default_score_weights(std::size_t m) { return std::vector<double>(m, 1.0); }

}  // namespace tscac
