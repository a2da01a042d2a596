#include "promptforge/prompts.hpp"

#include "promptforge/error.hpp"
#include "promptforge/numerics/tensor_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace promptforge::prompts {

std::vector<std::string> default_style_dictionary() {
  // Words the teacher saw in captions, words naming factors the renderer can
  // vary, and words it has no notion of.
  return {"plain",     "bold",     "tilted",   "crimson",  "noisy",   "dusty",   "striped", "dark",
          "azure",     "inverted", "rotated",  "thin",     "thick",   "grainy",  "faded",   "bright",
          "pale",      "golden",   "emerald",  "checkered", "dotted", "shaded",  "watercolor", "origami",
          "mosaic",    "graffiti", "marble",   "velvet",   "pastel",  "vintage", "glossy",  "chalk"};
}

std::vector<std::string> load_style_dictionary(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read style dictionary " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

void save_style_dictionary(const std::filesystem::path& path, const std::vector<std::string>& words) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  for (const auto& w : words) os << w << '\n';
}

void validate_dictionary(const std::vector<std::string>& words, const teacher::Tokenizer& tok,
                         const std::vector<std::string>& forbidden) {
  if (words.empty()) throw ValidationError("style dictionary is empty");
  std::set<std::string> seen;
  for (const auto& w : words) {
    if (w.empty()) throw ValidationError("empty style word");
    if (!seen.insert(w).second) throw ValidationError("duplicate style word '" + w + "'");
    if (!tok.permitted(w) || w.find(teacher::kPseudoMarker) != std::string::npos)
      throw ValidationError("style word '" + w + "' has characters outside the alphabet");
    if (std::find(forbidden.begin(), forbidden.end(), w) != forbidden.end())
      throw ValidationError("style word '" + w + "' names a held-out evaluation style");
  }
}

Tensor mix_prompt(const Tensor& a, const Tensor& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("mix lambda must lie in [0, 1]");
  if (a.shape() != b.shape()) throw ContractViolation("mix_prompt: shape mismatch");
  // The renormalization is the identity at the endpoints; skip it so the
  // result is the input bit for bit.
  if (lambda == 1.0 || a == b) return a;
  if (lambda == 0.0) return b;
  Tensor out(a.shape());
  double n2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = lambda * a[i] + (1.0 - lambda) * b[i];
    n2 += out[i] * out[i];
  }
  if (!(n2 > 0.0)) throw ValidationError("mix_prompt: antipodal inputs mix to zero");
  const double inv = 1.0 / std::sqrt(n2);
  for (double& v : out.values()) v *= inv;
  return out;
}

CodebookStats estimate_codebook_stats(const Tensor& codebook) {
  if (codebook.rank() != 2 || codebook.rows() == 0) throw ValidationError("codebook statistics need K >= 1 rows");
  const std::size_t K = codebook.rows();
  const std::size_t D = codebook.cols();
  CodebookStats s{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
  for (std::size_t j = 0; j < K; ++j)
    for (std::size_t d = 0; d < D; ++d) s.mean[d] += codebook.at(j, d);
  for (double& m : s.mean) m /= static_cast<double>(K);
  // Population variance, accumulated around the mean.
  for (std::size_t j = 0; j < K; ++j)
    for (std::size_t d = 0; d < D; ++d) {
      const double c = codebook.at(j, d) - s.mean[d];
      s.stddev[d] += c * c;
    }
  for (double& v : s.stddev) v = std::sqrt(v / static_cast<double>(K));
  return s;
}

PseudoToken sample_pseudo_token(const CodebookStats& stats, double e, RngStream& stream) {
  if (!(e >= 0.0)) throw ValidationError("pseudo-token scale e must be >= 0");
  const std::size_t D = stats.mean.size();
  PseudoToken t;
  t.value = Tensor::matrix(1, D);
  t.provenance = "random";
  t.scale = e;
  t.eps.resize(D);
  for (std::size_t d = 0; d < D; ++d) {
    t.eps[d] = stream.gaussian();
    t.value[d] = stats.mean[d] + e * t.eps[d] * stats.stddev[d];
  }
  return t;
}

std::string pseudo_caption(const std::string& category) {
  return category + " " + kTemplate + " " + std::string(1, teacher::kPseudoMarker);
}

Tensor compose_prompt(const std::string& category, const Tensor& v, const teacher::TeacherModel& teacher) {
  auto seq = teacher.tokenizer.tokenize(pseudo_caption(category));
  seq.fill(v);
  return teacher.encode_sequences({seq});
}

std::string augmentation_name(Augmentation a) { return a == Augmentation::Shuffle ? "shuffle" : "substitute"; }

Augmentation parse_augmentation(const std::string& name) {
  if (name == "shuffle") return Augmentation::Shuffle;
  if (name == "substitute") return Augmentation::Substitute;
  throw ValidationError("unknown augmentation '" + name + "'");
}

namespace {

// Start offsets and lengths of the template words inside `text`.
std::vector<std::pair<std::size_t, std::size_t>> template_words(const std::string& text) {
  const std::string tmpl = kTemplate;
  std::size_t pos = 0;
  for (;;) {
    pos = text.find(tmpl, pos);
    if (pos == std::string::npos) throw ValidationError("prompt '" + text + "' lacks the template");
    const bool left = pos == 0 || text[pos - 1] == ' ';
    const bool right = pos + tmpl.size() == text.size() || text[pos + tmpl.size()] == ' ';
    if (left && right) break;
    ++pos;
  }
  std::vector<std::pair<std::size_t, std::size_t>> words;
  std::size_t start = pos;
  for (std::size_t i = pos; i <= pos + tmpl.size(); ++i)
    if (i == pos + tmpl.size() || text[i] == ' ') {
      words.emplace_back(start, i - start);
      start = i + 1;
    }
  return words;
}

}  // namespace

std::string apply_template_permutation(const std::string& text, const std::vector<std::vector<std::size_t>>& perms) {
  const auto words = template_words(text);
  if (perms.size() != words.size()) throw ContractViolation("one permutation per template word expected");
  std::string out = text;
  for (std::size_t w = 0; w < words.size(); ++w) {
    const auto [start, len] = words[w];
    const auto& p = perms[w];
    if (p.size() != len) throw ContractViolation("permutation length differs from template word length");
    std::vector<bool> used(len, false);
    for (std::size_t i = 0; i < len; ++i) {
      if (p[i] >= len || used[p[i]]) throw ContractViolation("not a permutation");
      used[p[i]] = true;
      out[start + i] = text[start + p[i]];
    }
  }
  return out;
}

std::string shuffle_template_augment(const std::string& text, RngStream& stream) {
  std::vector<std::vector<std::size_t>> perms;
  for (const auto& w : template_words(text)) perms.push_back(stream.permutation(w.second));
  return apply_template_permutation(text, perms);
}

std::string substitute_template_augment(const std::string& text, RngStream& stream) {
  std::string out = text;
  for (const auto& [start, len] : template_words(text))
    for (std::size_t i = 0; i < len; ++i) out[start + i] = static_cast<char>('a' + stream.index(26));
  return out;
}

Var contrastive_prompt_loss(Tape& tape, Var anchors, Var positives, Var negatives, const Tensor& mask, double tau) {
  if (!(tau > 0.0)) throw ValidationError("contrastive temperature must be positive");
  const auto& a = tape.value(anchors);
  const auto& n = tape.value(negatives);
  if (mask.rows() != a.rows() || mask.cols() != n.rows()) throw ContractViolation("contrastive mask shape mismatch");
  if (n.rows() == 0) throw ContractViolation("contrastive loss needs at least one negative");
  // Excluded negatives get a logit far below anything a cosine can reach.
  Tensor offset(mask.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) offset[i] = mask[i] != 0.0 ? 0.0 : -1e9;
  Var pos = tape.scale(tape.rows_dot(anchors, positives), 1.0 / tau);
  Var neg = tape.add(tape.scale(tape.matmul_transpose_b(anchors, negatives), 1.0 / tau), tape.constant(std::move(offset)));
  const Var parts[] = {pos, neg};
  Var logp = tape.slice_cols(tape.log_softmax_rows(tape.concat_cols(parts)), 0, 1);
  return tape.scale(tape.mean(logp), -1.0);
}

double contrastive_prompt_loss(std::span<const double> anchor, std::span<const double> positive,
                               const std::vector<std::span<const double>>& negatives, double tau) {
  if (!(tau > 0.0)) throw ValidationError("contrastive temperature must be positive");
  if (negatives.empty()) throw ContractViolation("contrastive loss needs at least one negative");
  auto dot = [](std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ContractViolation("contrastive loss: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
  };
  std::vector<double> z{dot(anchor, positive) / tau};
  for (auto n : negatives) z.push_back(dot(anchor, n) / tau);
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return -(z[0] - m - std::log(s));
}

MemoryBank::MemoryBank(std::size_t capacity, std::size_t embed_dim) : capacity_(capacity), dim_(embed_dim) {
  if (capacity == 0) throw ValidationError("memory bank capacity must be >= 1");
}

void MemoryBank::push(const Tensor& rows, const std::vector<std::size_t>& categories) {
  if (rows.cols() != dim_ || rows.rows() != categories.size()) throw ContractViolation("memory bank push: shape mismatch");
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    const auto row = rows.row_span(r);
    double n2 = 0.0;
    for (double v : row) n2 += v * v;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) throw ContractViolation("memory bank stores unit embeddings only");
    if (rows_.size() == capacity_) {
      rows_.pop_front();
      cats_.pop_front();
    }
    rows_.emplace_back(row.begin(), row.end());
    cats_.push_back(categories[r]);
    ++pushed_;
  }
}

std::vector<std::size_t> MemoryBank::sample(std::size_t k, RngStream& stream) const {
  std::vector<std::size_t> idx(rows_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (k >= idx.size()) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + stream.index(idx.size() - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ContrastiveTrace optimize_contrastive_prompts(const std::vector<std::string>& categories,
                                              std::vector<std::vector<Tensor>>& tokens, const ContrastiveConfig& cfg,
                                              MemoryBank& bank, const teacher::TeacherModel& teacher,
                                              const RngStream& stream) {
  if (!(cfg.tau > 0.0)) throw ValidationError("contrastive temperature must be positive");
  if (cfg.batch_size < 1 || cfg.epochs < 1) throw ValidationError("contrastive batch size and epochs must be >= 1");
  if (tokens.size() != categories.size()) throw ContractViolation("one token list per category expected");
  std::vector<std::pair<std::size_t, std::size_t>> flat;
  for (std::size_t c = 0; c < tokens.size(); ++c)
    for (std::size_t j = 0; j < tokens[c].size(); ++j) flat.emplace_back(c, j);
  if (flat.empty()) throw ValidationError("contrastive optimization needs a nonempty pool");

  std::vector<teacher::TokenSequence> base;
  for (const auto& c : categories) base.push_back(teacher.tokenizer.tokenize(pseudo_caption(c)));
  // Lazy Adam: an entry's moments advance only on steps that include it.
  std::vector<numerics::AdamState> adam;
  for (const auto& [c, j] : flat) adam.emplace_back(tokens[c][j].shape(), numerics::AdamConfig{.lr = cfg.lr});

  // The initial pool is the first generation of history, so even the first
  // step sees a full complement of bank negatives.
  {
    std::vector<teacher::TokenSequence> seqs;
    std::vector<std::size_t> cats;
    for (const auto& [c, j] : flat) {
      seqs.push_back(base[c]);
      seqs.back().fill(tokens[c][j]);
      cats.push_back(c);
    }
    bank.push(teacher.encode_sequences(seqs), cats);
  }

  RngStream order = stream.child("order");
  RngStream aug = stream.child("augment");
  RngStream pick = stream.child("bank");
  ContrastiveTrace trace;
  const std::size_t P = flat.size();
  const std::size_t E = teacher.dims.embed_dim;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = order.permutation(P);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < P; start += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, P - start);
      Tape tape;
      const auto tv = teacher::bind(tape, teacher, false);
      std::vector<Var> params, anchor_rows, positive_rows;
      std::vector<std::size_t> cats;
      for (std::size_t i = 0; i < B; ++i) {
        const auto [c, j] = flat[perm[start + i]];
        cats.push_back(c);
        Var v = tape.param(tokens[c][j]);
        params.push_back(v);
        anchor_rows.push_back(teacher::token_embed(tape, tv, base[c], v));
        const std::string text = pseudo_caption(categories[c]);
        const std::string shifted = cfg.augmentation == Augmentation::Shuffle ? shuffle_template_augment(text, aug)
                                                                             : substitute_template_augment(text, aug);
        positive_rows.push_back(teacher::token_embed(tape, tv, teacher.tokenizer.tokenize(shifted), v));
      }
      Var anchors = teacher::sentence_embed(tape, teacher, tv, anchor_rows);
      Var positives = teacher::sentence_embed(tape, teacher, tv, positive_rows);

      const auto drawn = bank.sample(cfg.bank_sample, pick);
      Var negatives = anchors;
      if (!drawn.empty()) {
        Tensor bank_rows = Tensor::matrix(drawn.size(), E);
        for (std::size_t k = 0; k < drawn.size(); ++k)
          std::copy_n(bank.row(drawn[k]).begin(), E, bank_rows.row_span(k).begin());
        const Var parts[] = {anchors, tape.constant(std::move(bank_rows))};
        negatives = tape.concat_rows(parts);
      }
      const std::size_t K = B + drawn.size();
      trace.negatives_per_step.push_back(K - 1);

      Tensor mask = Tensor::matrix(B, K, 1.0);
      for (std::size_t i = 0; i < B; ++i) {
        mask.at(i, i) = 0.0;
        if (!cfg.intra_class) continue;
        for (std::size_t k = 0; k < K; ++k) {
          const std::size_t other = k < B ? cats[k] : bank.category(drawn[k - B]);
          if (other != cats[i]) mask.at(i, k) = 0.0;
        }
      }
      if (K < 2) {
        // A single prompt with an empty bank has nothing to be pushed from.
        bank.push(tape.value(anchors), cats);
        continue;
      }
      Var loss = contrastive_prompt_loss(tape, anchors, positives, negatives, mask, cfg.tau);
      const auto g = tape.backward(loss);
      for (std::size_t i = 0; i < B; ++i) {
        const auto [c, j] = flat[perm[start + i]];
        numerics::adam_step(adam[perm[start + i]], tokens[c][j], g.of(params[i]));
      }
      bank.push(tape.value(anchors), cats);
      total += tape.scalar(loss);
      ++batches;
      ++trace.steps;
    }
    trace.epoch_loss.push_back(batches ? total / static_cast<double>(batches) : 0.0);
  }
  trace.bank_size = bank.size();
  trace.flagged = !(trace.epoch_loss.back() < trace.epoch_loss.front());
  return trace;
}

namespace {

std::vector<Tensor> compose_all(const std::string& category, const std::vector<Tensor>& vs,
                                const teacher::TeacherModel& teacher) {
  std::vector<teacher::TokenSequence> seqs;
  const auto base = teacher.tokenizer.tokenize(pseudo_caption(category));
  for (const auto& v : vs) {
    auto s = base;
    s.fill(v);
    seqs.push_back(std::move(s));
  }
  const Tensor e = teacher.encode_sequences(seqs);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < vs.size(); ++i) out.push_back(e.row_copy(i));
  return out;
}

std::vector<std::vector<Tensor>> random_tokens(std::size_t classes, std::size_t size, double e,
                                               const teacher::TeacherModel& teacher, const RngStream& stream) {
  const auto stats = estimate_codebook_stats(teacher.codebook);
  std::vector<std::vector<Tensor>> tokens(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    auto s = stream.child(std::to_string(c));
    for (std::size_t j = 0; j < size; ++j) tokens[c].push_back(sample_pseudo_token(stats, e, s).value);
  }
  return tokens;
}

}  // namespace

PromptPool build_pool(const std::string& method, const std::vector<std::string>& categories, std::size_t size,
                      const PoolConfig& cfg, const teacher::TeacherModel& teacher, const RngStream& stream) {
  if (size < 1) throw ValidationError("prompt pool size must be >= 1");
  if (categories.empty()) throw ValidationError("prompt pool needs categories");
  PromptPool pool;
  pool.method = method;
  pool.categories = categories;
  pool.entries.resize(categories.size());
  const std::size_t M = categories.size();

  if (method == "vanilla") {
    const Tensor cls = teacher.class_embeddings(categories);
    for (std::size_t c = 0; c < M; ++c)
      for (std::size_t j = 0; j < size; ++j) pool.entries[c].push_back({cls.row_copy(c), c, "vanilla"});
  } else if (method == "mix") {
    const auto& words = cfg.dictionary;
    if (words.size() < 2) throw ValidationError("mix prompts need at least two dictionary words");
    validate_dictionary(words, teacher.tokenizer, {});
    if (!(cfg.beta_alpha > 0.0)) throw ValidationError("beta alpha must be positive");
    std::vector<std::string> texts;
    for (const auto& c : categories)
      for (const auto& w : words) texts.push_back(world::build_caption(c, w));
    const Tensor styled = teacher.encode_texts(texts);
    for (std::size_t c = 0; c < M; ++c) {
      auto s = stream.child("mix").child(std::to_string(c));
      for (std::size_t j = 0; j < size; ++j) {
        const std::size_t a = s.index(words.size());
        std::size_t b = s.index(words.size() - 1);
        if (b >= a) ++b;
        const double lambda = numerics::sample_beta(s, cfg.beta_alpha);
        Tensor t = mix_prompt(styled.row_copy(c * words.size() + a), styled.row_copy(c * words.size() + b), lambda);
        pool.entries[c].push_back({std::move(t), c, "mix:" + words[a] + "|" + words[b] + ":" + std::to_string(lambda)});
      }
    }
  } else if (method == "random" || method == "contrastive") {
    // Contrastive starts from the Random-Prompt pool of the same stream.
    pool.pseudo_tokens = random_tokens(M, size, cfg.scale_e, teacher, stream.child("random"));
    if (method == "contrastive") {
      MemoryBank bank(cfg.contrastive.bank_capacity, teacher.dims.embed_dim);
      pool.trace = optimize_contrastive_prompts(categories, pool.pseudo_tokens, cfg.contrastive, bank, teacher,
                                                stream.child("contrastive"));
    }
    for (std::size_t c = 0; c < M; ++c) {
      auto emb = compose_all(categories[c], pool.pseudo_tokens[c], teacher);
      for (auto& e : emb) pool.entries[c].push_back({std::move(e), c, method});
    }
  } else {
    throw ValidationError("unknown prompt method '" + method + "'");
  }
  return pool;
}

double mean_pairwise_cosine_distance(const std::vector<std::vector<std::span<const double>>>& groups) {
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        s += 1.0 - teacher::cosine_similarity(g[i], g[j]);
        ++pairs;
      }
    total += s / static_cast<double>(pairs);
    ++used;
  }
  return used ? total / static_cast<double>(used) : 0.0;
}

double pool_diversity(const PromptPool& pool) {
  std::vector<std::vector<std::span<const double>>> groups;
  for (const auto& cls : pool.entries) {
    groups.emplace_back();
    for (const auto& e : cls) groups.back().push_back(e.embedding.values());
  }
  return mean_pairwise_cosine_distance(groups);
}

nlohmann::json pool_config_json(const PoolConfig& cfg) {
  const auto& c = cfg.contrastive;
  return {{"scale_e", cfg.scale_e},
          {"beta_alpha", cfg.beta_alpha},
          {"dictionary", cfg.dictionary},
          {"contrastive",
           {{"tau", c.tau},
            {"lr", c.lr},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"bank_sample", c.bank_sample},
            {"bank_capacity", c.bank_capacity},
            {"intra_class", c.intra_class},
            {"augmentation", augmentation_name(c.augmentation)}}}};
}

void save_pool(const std::filesystem::path& path, const PromptPool& pool, const PoolConfig& cfg) {
  nlohmann::json j;
  j["format"] = "promptforge-prompt-pool";
  j["version"] = 1;
  j["method"] = pool.method;
  j["categories"] = pool.categories;
  j["per_class"] = pool.per_class();
  j["config"] = pool_config_json(cfg);
  auto tensor_path = path;
  tensor_path.replace_extension(".ten");
  j["embeddings"] = tensor_path.filename().string();
  nlohmann::json entries = nlohmann::json::array();
  std::size_t rows = 0;
  for (const auto& cls : pool.entries) rows += cls.size();
  const std::size_t E = rows ? pool.entries.front().front().embedding.size() : 0;
  Tensor block = Tensor::matrix(rows, E);
  std::size_t r = 0;
  for (const auto& cls : pool.entries)
    for (const auto& e : cls) {
      entries.push_back({{"category", e.category}, {"provenance", e.provenance}});
      std::copy_n(e.embedding.values().begin(), E, block.row_span(r++).begin());
    }
  j["entries"] = std::move(entries);
  if (!pool.pseudo_tokens.empty()) {
    auto tok_path = path;
    tok_path.replace_extension(".tokens.ten");
    const std::size_t D = pool.pseudo_tokens.front().front().size();
    Tensor toks = Tensor::matrix(rows, D);
    r = 0;
    for (const auto& cls : pool.pseudo_tokens)
      for (const auto& t : cls) std::copy_n(t.values().begin(), D, toks.row_span(r++).begin());
    numerics::save_ten(tok_path, toks);
    j["pseudo_tokens"] = tok_path.filename().string();
  }
  if (pool.trace) {
    const auto& t = *pool.trace;
    j["trace"] = {{"epoch_loss", t.epoch_loss}, {"steps", t.steps}, {"bank_size", t.bank_size},
                  {"negatives_per_step", t.negatives_per_step}, {"flagged", t.flagged}};
  }
  numerics::save_ten(tensor_path, block);
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << j.dump(1) << '\n';
}

PromptPool load_pool(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read prompt pool " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed prompt pool: " + std::string(e.what()));
  }
  if (j.value("format", "") != "promptforge-prompt-pool") throw ValidationError(path.string() + " is not a prompt pool");
  PromptPool pool;
  pool.method = j.at("method").get<std::string>();
  pool.categories = j.at("categories").get<std::vector<std::string>>();
  pool.entries.resize(pool.categories.size());
  const Tensor block = numerics::load_ten(path.parent_path() / j.at("embeddings").get<std::string>());
  const auto& entries = j.at("entries");
  if (block.rows() != entries.size()) throw ValidationError("prompt pool tensor and manifest disagree");
  for (std::size_t r = 0; r < entries.size(); ++r) {
    const auto c = entries[r].at("category").get<std::size_t>();
    if (c >= pool.categories.size()) throw ValidationError("prompt pool entry has an unknown category");
    pool.entries[c].push_back({block.row_copy(r), c, entries[r].at("provenance").get<std::string>()});
  }
  if (j.contains("pseudo_tokens")) {
    const Tensor toks = numerics::load_ten(path.parent_path() / j.at("pseudo_tokens").get<std::string>());
    pool.pseudo_tokens.resize(pool.categories.size());
    for (std::size_t r = 0; r < entries.size(); ++r)
      pool.pseudo_tokens[entries[r].at("category").get<std::size_t>()].push_back(toks.row_copy(r));
  }
  if (j.contains("trace")) {
    const auto& t = j.at("trace");
    ContrastiveTrace tr;
    tr.epoch_loss = t.at("epoch_loss").get<std::vector<double>>();
    tr.steps = t.at("steps").get<std::size_t>();
    tr.bank_size = t.at("bank_size").get<std::size_t>();
    tr.negatives_per_step = t.at("negatives_per_step").get<std::vector<std::size_t>>();
    tr.flagged = t.at("flagged").get<bool>();
    pool.trace = tr;
  }
  return pool;
}

}  // namespace promptforge::prompts
