// Writes a synthetic template corpus plus a set of all-negative products for
// trying the pipeline without real data.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "cfaug/toy_corpus.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic review corpus"};
  std::filesystem::path out_dir = ".";
  cfaug::ToyCorpusOptions o;
  std::size_t neg_products = 24, neg_reviews = 8;
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--seed", o.seed, "generator seed");
  app.add_option("--products", o.products, "number of products")->check(CLI::PositiveNumber);
  app.add_option("--per-product", o.reviews_per_product, "reviews per product")->check(CLI::PositiveNumber);
  app.add_option("--positive-fraction", o.positive_fraction, "share of 4/5 ratings")->check(CLI::Range(0.0, 1.0));
  app.add_option("--neutral-fraction", o.neutral_fraction, "share of 3 ratings")->check(CLI::Range(0.0, 1.0));
  app.add_option("--negative-products", neg_products, "all-negative evaluation products");
  app.add_option("--negative-reviews", neg_reviews, "reviews per evaluation product");
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(out_dir);
    const auto corpus = cfaug::toy_reviews(o);
    cfaug::save_reviews(out_dir / "corpus.jsonl", corpus.reviews());
    std::vector<cfaug::Review> eval;
    for (auto& group : cfaug::toy_negative_products(neg_products, neg_reviews, o.seed + 1))
      eval.insert(eval.end(), group.begin(), group.end());
    cfaug::save_reviews(out_dir / "eval_negative.jsonl", eval);
    std::cout << "corpus " << corpus.size() << " reviews, eval " << eval.size() << " reviews\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
