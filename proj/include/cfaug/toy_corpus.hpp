#pragma once

// Synthetic template reviews. Content comes from (item, aspect, template)
// slots and polarity from aligned adjective lists, so a positive review and
// its counterfactual differ only in the polarity words.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cfaug/corpus.hpp"

namespace cfaug {

struct ToySlots {
  std::size_t item = 0;
  std::size_t aspect = 0;
  std::size_t form = 0;  // template index
  std::size_t adj1 = 0;
  std::size_t adj2 = 0;
};

const std::vector<std::string>& toy_items();
const std::vector<std::string>& toy_aspects();
std::size_t toy_form_count();
std::size_t toy_adjective_count();

enum class ToyTone { kPositive, kNeutral, kNegative };

std::string toy_text(const ToySlots& slots, ToyTone tone);
ToySlots random_toy_slots(std::mt19937_64& rng, std::size_t item);

/// n pairs over `products` products (product k is about item k mod items).
std::vector<CounterfactualPair> toy_pairs(std::size_t n, std::uint64_t seed,
                                          std::size_t products = 12);

struct ToyCorpusOptions {
  std::size_t products = 12;
  std::size_t reviews_per_product = 30;
  double positive_fraction = 0.85;  // rating 4/5
  double neutral_fraction = 0.03;   // rating 3; the rest are 1/2
  std::uint64_t seed = 0;
  std::string product_prefix = "toy";
};

ReviewSet toy_reviews(const ToyCorpusOptions& options);

/// Products whose reviews are all negative (ratings 1/2), for summary tests.
std::vector<std::vector<Review>> toy_negative_products(std::size_t products,
                                                       std::size_t reviews_per_product,
                                                       std::uint64_t seed);

}  // namespace cfaug
