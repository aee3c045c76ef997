#pragma once

// Synthetic review-style offline data. Each session is one customer's
// ordered sequence of reviewed hotels; every review carries eight scores,
// the overall rating first (the main response) followed by seven aspect
// ratings. Scores lie in [1, 5].
//
// Customers choose hotels with a logged stochastic behavior policy whose
// probabilities are recorded on every transition.
//
// State encoding (review_state_dim = id_dim + window * (id_dim + 8)):
//   hashed customer-id embedding, then for each of the last `window`
//   reviewed hotels (most recent first) a hashed hotel-id embedding and its
//   eight scores centered as (score - 3) / 2. Missing history is zero.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tscac/cmdp.hpp"

namespace tscac {

inline constexpr std::size_t kReviewScores = 8;

struct ReviewDatasetConfig {
  std::size_t n_users = 400;
  std::size_t n_items = 30;
  std::size_t n_reviews = 8000;
  std::size_t m = kReviewScores;
  std::size_t min_trajectory_length = 20;
  std::size_t history_window = 3;
  // Generated sessions draw their length from this range; the loader drops the
  // ones shorter than min_trajectory_length.
  std::pair<std::size_t, std::size_t> review_length_range{10, 40};
  std::size_t id_dim = 4;
  std::size_t latent_dim = 4;
  // Inverse temperature of the customers' hotel choice and the share of
  // uniformly random choices mixed into it.
  double behavior_sharpness = 1.0;
  double behavior_uniform_mix = 0.1;
  double score_noise_std = 0.3;
  std::uint64_t seed = 7;

  void validate() const;
  std::size_t state_dim() const { return id_dim + history_window * (id_dim + kReviewScores); }
};

struct ReviewEncoding {
  std::size_t id_dim = 4;
  std::size_t history_window = 3;

  std::size_t state_dim() const { return id_dim + history_window * (id_dim + kReviewScores); }
};

// Hashed, seed-free id embeddings in [-1, 1].
std::vector<double> hashed_embedding(std::string_view kind, std::string_view id, std::size_t dim);

// State before step t of a session, from the customer id and the previously
// reviewed hotels with their score vectors.
std::vector<double> encode_review_state(const ReviewEncoding& enc, const std::string& user_id,
                                        std::span<const std::size_t> items,
                                        std::span<const std::vector<double>> scores,
                                        std::size_t t);

// Full synthetic corpus (no length filter applied).
ReplayDataset generate_review_dataset(const ReviewDatasetConfig& config);

struct ReviewLoadOptions {
  std::size_t min_trajectory_length = 20;
  ReviewEncoding encoding;
};

// Reads the dataset text format (m must be 8, every line needs an action
// index), drops sessions shorter than min_trajectory_length and rebuilds the
// states from the logged hotels and scores; the session id is the customer id.
ReplayDataset load_review_dataset(const std::filesystem::path& path,
                                  const ReviewLoadOptions& options = {});
ReplayDataset load_review_dataset(std::istream& is, const ReviewLoadOptions& options = {});

// Keeps the sessions with at least min_length steps and re-encodes states.
ReplayDataset prepare_review_dataset(ReplayDataset raw, const ReviewLoadOptions& options);

// Default per-response weights of the weighted-sum baselines (all ones).
std::vector<double> default_score_weights(std::size_t m);

}  // namespace tscac
