#include "promptforge/error.hpp"
#include "promptforge/numerics/hash.hpp"
#include "promptforge/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace promptforge::teacher {

using numerics::RngStream;

std::optional<std::size_t> TokenSequence::slot() const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == kSlot) return i;
  return std::nullopt;
}

void TokenSequence::fill(Tensor v) {
  if (!slot()) throw ContractViolation("sequence has no pseudo-word slot to fill");
  injected = std::move(v);
}

Tokenizer::Tokenizer() : alphabet_("abcdefghijklmnopqrstuvwxyz -0123") {
  table_.fill(-1);
  for (std::size_t i = 0; i < alphabet_.size(); ++i)
    table_[static_cast<unsigned char>(alphabet_[i])] = static_cast<int>(i);
}

std::string Tokenizer::alphabet_hash() const { return numerics::sha256_hex(alphabet_).substr(0, 16); }

std::optional<std::size_t> Tokenizer::id(char c) const {
  const int v = table_[static_cast<unsigned char>(c)];
  if (v < 0) return std::nullopt;
  return static_cast<std::size_t>(v);
}

bool Tokenizer::permitted(std::string_view text) const {
  for (char c : text)
    if (c != kPseudoMarker && !id(c)) return false;
  return true;
}

TokenSequence Tokenizer::tokenize(std::string_view text) const {
  if (text.empty()) throw ValidationError("empty prompt");
  if (text.size() > kMaxSequence)
    throw ValidationError("prompt longer than " + std::to_string(kMaxSequence) + " characters");
  TokenSequence seq;
  seq.ids.reserve(text.size());
  bool marker = false;
  for (char c : text) {
    if (c == kPseudoMarker) {
      if (marker) throw ValidationError("more than one pseudo-word marker in '" + std::string(text) + "'");
      marker = true;
      seq.ids.push_back(TokenSequence::kSlot);
      continue;
    }
    const auto i = id(c);
    if (!i) throw ValidationError(std::string("illegal character '") + c + "' in prompt");
    seq.ids.push_back(*i);
  }
  return seq;
}

std::string Tokenizer::detokenize(const TokenSequence& seq) const {
  std::string s;
  for (auto i : seq.ids) s.push_back(i == TokenSequence::kSlot ? kPseudoMarker : symbol(i));
  return s;
}

TeacherModel TeacherModel::init(const TeacherDims& dims, RngStream& stream) {
  TeacherModel m;
  m.dims = dims;
  auto cb = stream.child("codebook");
  m.codebook = numerics::sample_gaussian(cb, {m.tokenizer.vocab_size(), dims.token_dim});
  auto ps = stream.child("positions");
  m.positions = numerics::sample_gaussian(ps, {1, kMaxSequence});
  for (double& w : m.positions.values()) w = 0.25 + 0.05 * w;
  auto ts = stream.child("text");
  m.text = numerics::Mlp::create({dims.token_dim, dims.text_hidden, dims.embed_dim},
                                 numerics::Activation::Tanh, numerics::Activation::Identity, ts);
  std::vector<std::size_t> sizes{dims.encoder_input_dim()};
  sizes.insert(sizes.end(), dims.image_hidden.begin(), dims.image_hidden.end());
  sizes.push_back(dims.embed_dim);
  auto is = stream.child("image");
  m.image = numerics::Mlp::create(sizes, numerics::Activation::Tanh, numerics::Activation::Identity, is);
  m.log_scale = std::log(10.0);
  return m;
}

std::vector<Var> TeacherVars::all() const {
  std::vector<Var> v{codebook, positions};
  for (auto x : text.all()) v.push_back(x);
  for (auto x : image.all()) v.push_back(x);
  v.push_back(log_scale);
  return v;
}

TeacherVars bind(Tape& tape, const TeacherModel& model, bool trainable) {
  TeacherVars v;
  v.codebook = trainable ? tape.param(model.codebook) : tape.constant_ref(model.codebook);
  v.positions = trainable ? tape.param(model.positions) : tape.constant_ref(model.positions);
  v.text = numerics::bind(tape, model.text, trainable);
  v.image = numerics::bind(tape, model.image, trainable);
  v.log_scale = tape.leaf(Tensor::scalar(model.log_scale), trainable);
  return v;
}

Var token_embed(Tape& tape, const TeacherVars& vars, const TokenSequence& seq, std::optional<Var> injected) {
  if (seq.ids.empty()) throw ValidationError("empty token sequence");
  const auto slot = seq.slot();
  if (!slot) return tape.gather_rows(vars.codebook, seq.ids);
  if (!injected) {
    if (!seq.injected) throw ValidationError("pseudo-word slot was never filled");
    injected = tape.constant(*seq.injected);
  }
  const auto& iv = tape.value(*injected);
  if (iv.rows() != 1 || iv.cols() != tape.value(vars.codebook).cols())
    throw ContractViolation("injected vector must be 1 x D_tok, got " + numerics::shape_string(iv.shape()));
  std::vector<Var> parts;
  std::vector<std::size_t> before(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(*slot));
  std::vector<std::size_t> after(seq.ids.begin() + static_cast<std::ptrdiff_t>(*slot) + 1, seq.ids.end());
  if (!before.empty()) parts.push_back(tape.gather_rows(vars.codebook, std::move(before)));
  parts.push_back(*injected);
  if (!after.empty()) parts.push_back(tape.gather_rows(vars.codebook, std::move(after)));
  return parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
}

Var sentence_embed(Tape& tape, const TeacherModel& model, const TeacherVars& vars, std::span<const Var> token_rows) {
  if (token_rows.empty()) throw ContractViolation("sentence_embed: no sequences");
  std::vector<Var> pooled;
  pooled.reserve(token_rows.size());
  for (auto rows : token_rows) {
    const auto L = tape.value(rows).rows();
    if (L < 1 || L > kMaxSequence)
      throw ValidationError("sequence length " + std::to_string(L) + " outside [1, " +
                            std::to_string(kMaxSequence) + "]");
    pooled.push_back(tape.matmul(tape.slice_cols(vars.positions, 0, L), rows));
  }
  Var p = pooled.size() == 1 ? pooled[0] : tape.concat_rows(pooled);
  return tape.l2_normalize_rows(numerics::forward(tape, model.text, vars.text, p));
}

Var encode_image(Tape& tape, const TeacherModel& model, const TeacherVars& vars, Var pixels) {
  if (tape.value(pixels).cols() != model.dims.image_dim())
    throw ContractViolation("encode_image: expected " + std::to_string(model.dims.image_dim()) +
                            " pixel values per row, got " + std::to_string(tape.value(pixels).cols()));
  auto prep = [&](Var v) { return model.dims.standardize ? standardize_rows(tape, v) : tape.add_scalar(v, -0.5); };
  Var x = prep(pixels);
  if (model.dims.contrast_map) {
    const Var parts[] = {x, prep(contrast_map(tape, pixels, model.dims.image_side))};
    x = tape.concat_cols(parts);
  }
  return tape.l2_normalize_rows(numerics::forward(tape, model.image, vars.image, x));
}

Var contrast_map(Tape& tape, Var pixels, std::size_t side) {
  const std::size_t D = side * side * 3;
  if (tape.value(pixels).cols() != D) throw ContractViolation("contrast_map: pixel width mismatch");
  // D x 3 averaging matrix over border pixels; the result is tiled back per pixel.
  Tensor select = Tensor::matrix(D, 3);
  const double border = static_cast<double>(4 * side - 4);
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j)
      if (i == 0 || j == 0 || i + 1 == side || j + 1 == side)
        for (std::size_t c = 0; c < 3; ++c) select.at((i * side + j) * 3 + c, c) = 1.0 / border;
  Var bg = tape.tile_cols(tape.matmul(pixels, tape.constant(std::move(select))), side * side);
  return tape.abs(tape.sub(pixels, bg));
}

Var standardize_rows(Tape& tape, Var x, double eps) { return tape.standardize_rows(x, eps); }

Tensor TeacherModel::encode_images(const Tensor& pixels) const {
  const std::size_t D = dims.image_dim();
  if (pixels.size() % D != 0) throw ContractViolation("encode_images: pixel count not a multiple of image size");
  for (double v : pixels.values())
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("encode_images: pixel outside [0,1]");
  const std::size_t N = pixels.size() / D;
  const Tensor flat = pixels.reshaped({N, D});
  Tensor out = Tensor::matrix(N, dims.embed_dim);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < N; start += kChunk) {
    const std::size_t n = std::min(kChunk, N - start);
    Tensor chunk = Tensor::matrix(n, D);
    std::copy_n(flat.values().begin() + static_cast<std::ptrdiff_t>(start * D), n * D, chunk.values().begin());
    Tape tape;
    const auto vars = bind(tape, *this, false);
    const auto e = encode_image(tape, *this, vars, tape.constant(std::move(chunk)));
    std::copy(tape.value(e).values().begin(), tape.value(e).values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(start * dims.embed_dim));
  }
  return out;
}

Tensor TeacherModel::encode_sequences(const std::vector<TokenSequence>& seqs) const {
  Tape tape;
  const auto vars = bind(tape, *this, false);
  std::vector<Var> rows;
  rows.reserve(seqs.size());
  for (const auto& s : seqs) rows.push_back(token_embed(tape, vars, s));
  return tape.value(sentence_embed(tape, *this, vars, rows));
}

Tensor TeacherModel::encode_texts(const std::vector<std::string>& texts) const {
  std::vector<TokenSequence> seqs;
  seqs.reserve(texts.size());
  for (const auto& t : texts) seqs.push_back(tokenizer.tokenize(t));
  return encode_sequences(seqs);
}

Tensor TeacherModel::class_embeddings(const std::vector<std::string>& categories) const {
  std::vector<std::string> prompts;
  for (const auto& c : categories) prompts.push_back(world::build_caption(c, std::nullopt));
  return encode_texts(prompts);
}

std::string TeacherModel::digest() const {
  std::string bytes;
  auto add = [&](const Tensor& t) {
    bytes.append(reinterpret_cast<const char*>(t.values().data()), t.size() * sizeof(double));
  };
  add(codebook);
  add(positions);
  for (const auto& l : text.layers) add(l.weight), add(l.bias);
  for (const auto& l : image.layers) add(l.weight), add(l.bias);
  add(Tensor::scalar(log_scale));
  return numerics::sha256_hex(bytes);
}

Var spherical_distance_sq(Tape& tape, Var u, Var v) {
  Var norm = tape.sqrt(tape.row_sums(tape.square(tape.sub(u, v))));
  return tape.square(tape.scale(tape.arcsin(tape.scale(norm, 0.5)), 2.0));
}

Var cosine_similarity(Tape& tape, Var u, Var v) {
  return tape.rows_dot(tape.l2_normalize_rows(u), tape.l2_normalize_rows(v));
}

namespace {
double norm_of(std::span<const double> u) {
  double s = 0.0;
  for (double x : u) s += x * x;
  return std::sqrt(s);
}
}  // namespace

double spherical_distance_sq(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ContractViolation("spherical_distance_sq: dimension mismatch");
  if (std::fabs(norm_of(u) - 1.0) > 1e-6 || std::fabs(norm_of(v) - 1.0) > 1e-6)
    throw ContractViolation("spherical_distance_sq: inputs must be unit norm");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  const double a = std::asin(std::min(0.5 * std::sqrt(s), 1.0));
  return 4.0 * a * a;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ContractViolation("cosine_similarity: dimension mismatch");
  const double nu = norm_of(u), nv = norm_of(v);
  if (nu == 0.0 || nv == 0.0) throw ContractViolation("cosine_similarity: zero vector");
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) d += u[i] * v[i];
  return std::clamp(d / (nu * nv), -1.0, 1.0);
}

std::size_t zero_shot_classify(std::span<const double> e, const Tensor& classes) {
  if (classes.rows() < 2) throw ContractViolation("zero_shot_classify: need at least two classes");
  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t m = 0; m < classes.rows(); ++m) {
    const double s = cosine_similarity(e, classes.row_span(m));
    if (s > best_sim) best_sim = s, best = m;
  }
  return best;
}

std::vector<std::size_t> zero_shot_classify(const Tensor& images, const Tensor& classes) {
  std::vector<std::size_t> out;
  out.reserve(images.rows());
  for (std::size_t i = 0; i < images.rows(); ++i) out.push_back(zero_shot_classify(images.row_span(i), classes));
  return out;
}

}  // namespace promptforge::teacher
