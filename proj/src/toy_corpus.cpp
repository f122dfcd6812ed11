#include "cfaug/toy_corpus.hpp"

#include <stdexcept>

namespace cfaug {

namespace {

// Aligned with polarity_word_pairs() so the mock service flips them exactly.
const std::vector<std::string> kPositive = {"great", "good",  "excellent", "amazing", "delicious",
                                            "friendly", "fresh", "clean", "wonderful", "tasty",
                                            "nice", "pleasant"};
const std::vector<std::string> kNegative = {"terrible", "bad",   "awful", "horrible", "disgusting",
                                            "rude",     "stale", "dirty", "dreadful", "bland",
                                            "nasty",    "unpleasant"};
const std::vector<std::string> kNeutral = {"okay", "average", "fine", "decent"};

const std::vector<std::string> kForms = {
    "the {item} was {a1} and the {aspect} was {a2} .",
    "{a1} {item} , {a2} {aspect} .",
    "i {verb} the {item} here , the {aspect} is {a1} .",
    "we ordered the {item} . it was {a1} and the {aspect} was {a2} .",
    "the {aspect} was {a1} , the {item} was {a2} too .",
};

std::string fill(std::string form, const std::string& key, const std::string& value) {
  for (auto at = form.find(key); at != std::string::npos; at = form.find(key, at + value.size()))
    form.replace(at, key.size(), value);
  return form;
}

}  // namespace

const std::vector<std::string>& toy_items() {
  static const std::vector<std::string> items = {"pizza", "pasta",  "burger", "salad",
                                                 "coffee", "soup",  "steak",  "sushi",
                                                 "tacos", "noodles", "sandwich", "curry"};
  return items;
}

const std::vector<std::string>& toy_aspects() {
  static const std::vector<std::string> aspects = {"service", "staff", "room",   "music",
                                                   "price",   "table", "waiter", "decor"};
  return aspects;
}

std::size_t toy_form_count() { return kForms.size(); }
std::size_t toy_adjective_count() { return kPositive.size(); }

std::string toy_text(const ToySlots& s, ToyTone tone) {
  const auto& adj = tone == ToyTone::kPositive ? kPositive : tone == ToyTone::kNegative ? kNegative : kNeutral;
  const std::string verb = tone == ToyTone::kPositive ? "love" : tone == ToyTone::kNegative ? "hate" : "tried";
  std::string t = kForms.at(s.form);
  t = fill(t, "{item}", toy_items().at(s.item));
  t = fill(t, "{aspect}", toy_aspects().at(s.aspect));
  t = fill(t, "{a1}", adj[s.adj1 % adj.size()]);
  t = fill(t, "{a2}", adj[s.adj2 % adj.size()]);
  t = fill(t, "{verb}", verb);
  return t;
}

ToySlots random_toy_slots(std::mt19937_64& rng, std::size_t item) {
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  ToySlots s;
  s.item = item % toy_items().size();
  s.aspect = pick(toy_aspects().size());
  s.form = pick(kForms.size());
  s.adj1 = pick(kPositive.size());
  s.adj2 = pick(kPositive.size());
  return s;
}

std::vector<CounterfactualPair> toy_pairs(std::size_t n, std::uint64_t seed, std::size_t products) {
  if (products == 0) throw std::invalid_argument("products must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<CounterfactualPair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t product = std::uniform_int_distribution<std::size_t>(0, products - 1)(rng);
    const auto slots = random_toy_slots(rng, product);
    const std::string pid = "toy-p" + std::to_string(product);
    CounterfactualPair p;
    p.positive = {"toy-pair" + std::to_string(i) + "-pos", pid, toy_text(slots, ToyTone::kPositive), 5};
    p.negative = {"toy-pair" + std::to_string(i) + "-neg", pid, toy_text(slots, ToyTone::kNegative), 1};
    p.origin = PairOrigin::kManual;
    out.push_back(std::move(p));
  }
  return out;
}

ReviewSet toy_reviews(const ToyCorpusOptions& o) {
  if (o.positive_fraction < 0 || o.neutral_fraction < 0 || o.positive_fraction + o.neutral_fraction > 1)
    throw std::invalid_argument("invalid toy corpus fractions");
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Review> reviews;
  for (std::size_t p = 0; p < o.products; ++p) {
    const std::string pid = o.product_prefix + "-p" + std::to_string(p);
    for (std::size_t k = 0; k < o.reviews_per_product; ++k) {
      const auto slots = random_toy_slots(rng, p);
      const double x = u(rng);
      const bool high = u(rng) < 0.7;
      Review r;
      r.review_id = pid + "-r" + std::to_string(k);
      r.product_id = pid;
      if (x < o.positive_fraction) {
        r.rating = high ? 5 : 4;
        r.text = toy_text(slots, ToyTone::kPositive);
      } else if (x < o.positive_fraction + o.neutral_fraction) {
        r.rating = 3;
        r.text = toy_text(slots, ToyTone::kNeutral);
      } else {
        r.rating = high ? 1 : 2;
        r.text = toy_text(slots, ToyTone::kNegative);
      }
      reviews.push_back(std::move(r));
    }
  }
  return ReviewSet(std::move(reviews));
}

std::vector<std::vector<Review>> toy_negative_products(std::size_t products,
                                                       std::size_t reviews_per_product,
                                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<Review>> out;
  for (std::size_t p = 0; p < products; ++p) {
    const std::string pid = "toy-neg-p" + std::to_string(p);
    std::vector<Review> rs;
    for (std::size_t k = 0; k < reviews_per_product; ++k) {
      const auto slots = random_toy_slots(rng, p);
      rs.push_back({pid + "-r" + std::to_string(k), pid, toy_text(slots, ToyTone::kNegative), 1});
    }
    out.push_back(std::move(rs));
  }
  return out;
}

}  // namespace cfaug
