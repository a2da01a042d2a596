#include "promptforge/error.hpp"
#include "promptforge/numerics/tensor_io.hpp"
#include "promptforge/teacher.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace promptforge::teacher {

using numerics::RngStream;
using nlohmann::json;

namespace {

world::Dataset gather_role(const world::WorldSpec& w, world::DomainRole role, std::size_t per_class,
                           const RngStream& stream) {
  world::Dataset out;
  for (const auto* d : w.domains_with_role(role)) {
    auto part = world::build_domain_dataset(*d, w.categories, per_class, stream, w.image_side);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

// Caption vocabulary: index c * (S + 1) + s for styled captions, s == S for
// the vanilla caption of category c.
struct CaptionTable {
  std::vector<std::string> text;
  std::vector<TokenSequence> tokens;
  std::map<std::string, std::size_t> style_index;
  std::size_t styles = 0;

  std::size_t id(std::size_t category, std::optional<std::size_t> style) const {
    return category * (styles + 1) + (style ? *style : styles);
  }
};

CaptionTable make_captions(const TeacherModel& m, const std::vector<std::string>& cats,
                           const std::vector<std::string>& styles) {
  CaptionTable t;
  t.styles = styles.size();
  for (std::size_t s = 0; s < styles.size(); ++s) t.style_index[styles[s]] = s;
  for (const auto& c : cats) {
    for (const auto& s : styles) t.text.push_back(world::build_caption(c, s));
    t.text.push_back(world::build_caption(c, std::nullopt));
  }
  for (const auto& s : t.text) t.tokens.push_back(m.tokenizer.tokenize(s));
  return t;
}

}  // namespace

double zero_shot_accuracy(const TeacherModel& model, const world::Dataset& data,
                          const std::vector<std::string>& categories) {
  if (data.empty()) throw ContractViolation("zero_shot_accuracy: empty dataset");
  const Tensor classes = model.class_embeddings(categories);
  const Tensor emb = model.encode_images(world::stack_pixels(data));
  const auto pred = zero_shot_classify(emb, classes);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hit += pred[i] == data[i].category;
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

TeacherReport evaluate_teacher(const TeacherModel& model, const world::WorldSpec& w, std::size_t per_class,
                               const RngStream& stream) {
  TeacherReport r;
  const auto cats = w.category_names();
  const auto train = gather_role(w, world::DomainRole::TeacherTrain, per_class, stream.child("eval-train"));
  const auto held = gather_role(w, world::DomainRole::HeldOutEval, per_class, stream.child("eval-heldout"));
  r.train_accuracy = zero_shot_accuracy(model, train, cats);
  r.heldout_accuracy = zero_shot_accuracy(model, held, cats);

  // Matched caption against the same style with a different category.
  const Tensor emb = model.encode_images(world::stack_pixels(train));
  RngStream pick = stream.child("eval-mismatch");
  std::vector<std::string> texts;
  for (const auto& img : train) {
    std::size_t other = pick.index(cats.size() - 1);
    if (other >= img.category) ++other;
    texts.push_back(world::build_caption(cats[img.category], img.style));
    texts.push_back(world::build_caption(cats[other], img.style));
  }
  const Tensor tx = model.encode_texts(texts);
  std::size_t wins = 0;
  for (std::size_t i = 0; i < train.size(); ++i)
    wins += cosine_similarity(emb.row_span(i), tx.row_span(2 * i)) >
            cosine_similarity(emb.row_span(i), tx.row_span(2 * i + 1));
  r.pair_match_rate = static_cast<double>(wins) / static_cast<double>(train.size());
  return r;
}

PretrainedTeacher pretrain_teacher(const world::WorldSpec& w, const TeacherConfig& cfg, const RngStream& stream) {
  w.validate();
  if (cfg.dims.image_side != w.image_side) throw ValidationError("teacher image side differs from the world's");
  if (cfg.batch_size < 2) throw ValidationError("teacher batch size must be at least 2");
  auto init_stream = stream.child("init");
  PretrainedTeacher out{TeacherModel::init(cfg.dims, init_stream), {}};
  TeacherModel& m = out.model;
  m.log_scale = std::log(cfg.init_logit_scale);
  const double max_log_scale = std::log(cfg.max_logit_scale);

  const auto cats = w.category_names();
  const auto data = gather_role(w, world::DomainRole::TeacherTrain, cfg.train_per_class, stream.child("train"));
  const Tensor X = world::stack_pixels(data);
  const auto captions = make_captions(m, cats, w.style_names(world::DomainRole::TeacherTrain));

  std::vector<Tensor*> params{&m.codebook, &m.positions};
  for (auto* p : m.text.parameters()) params.push_back(p);
  for (auto* p : m.image.parameters()) params.push_back(p);
  Tensor log_scale = Tensor::scalar(m.log_scale);
  params.push_back(&log_scale);
  numerics::AdamGroup opt(params, {.lr = cfg.lr});

  RngStream order = stream.child("order");
  RngStream vanilla = stream.child("vanilla");
  const std::size_t N = data.size();
  const std::size_t D = m.dims.image_dim();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = order.permutation(N);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 1 < N; start += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, N - start);
      if (B < 2) break;
      Tensor xb = Tensor::matrix(B, D);
      std::vector<std::size_t> cap(B);
      for (std::size_t i = 0; i < B; ++i) {
        const auto& img = data[perm[start + i]];
        std::copy_n(X.row_span(perm[start + i]).begin(), D, xb.row_span(i).begin());
        const bool plain = vanilla.uniform() < cfg.vanilla_fraction;
        cap[i] = captions.id(img.category, plain ? std::nullopt
                                                 : std::optional<std::size_t>(captions.style_index.at(img.style)));
      }
      std::vector<std::size_t> unique = cap;
      std::sort(unique.begin(), unique.end());
      unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
      std::vector<std::size_t> local(B);
      for (std::size_t i = 0; i < B; ++i)
        local[i] = static_cast<std::size_t>(std::lower_bound(unique.begin(), unique.end(), cap[i]) - unique.begin());

      // Rows with identical captions share the target mass.
      Tensor target = Tensor::matrix(B, B);
      for (std::size_t i = 0; i < B; ++i) {
        double count = 0.0;
        for (std::size_t j = 0; j < B; ++j) count += cap[i] == cap[j];
        for (std::size_t j = 0; j < B; ++j) target.at(i, j) = cap[i] == cap[j] ? 1.0 / count : 0.0;
      }

      Tape tape;
      TeacherVars v = bind(tape, m, true);
      Var img = encode_image(tape, m, v, tape.constant(std::move(xb)));
      std::vector<Var> rows;
      for (auto u : unique) rows.push_back(token_embed(tape, v, captions.tokens[u]));
      Var txt = tape.gather_rows(sentence_embed(tape, m, v, rows), local);
      Var s = tape.exp(v.log_scale);
      Var t = tape.constant(std::move(target));
      Var i2t = tape.sum(tape.mul(t, tape.log_softmax_rows(tape.scale_by(tape.matmul_transpose_b(img, txt), s))));
      Var t2i = tape.sum(tape.mul(t, tape.log_softmax_rows(tape.scale_by(tape.matmul_transpose_b(txt, img), s))));
      Var loss = tape.scale(tape.add(i2t, t2i), -0.5 / static_cast<double>(B));

      const auto g = tape.backward(loss);
      opt.step(numerics::collect(g, v.all()));
      log_scale[0] = std::min(log_scale[0], max_log_scale);
      m.log_scale = log_scale[0];
      epoch_loss += tape.scalar(loss);
      ++batches;
    }
    epoch_loss /= static_cast<double>(std::max<std::size_t>(batches, 1));
    if (epoch == 0) out.report.first_epoch_loss = epoch_loss;
    out.report.final_epoch_loss = epoch_loss;
  }

  const auto r = evaluate_teacher(m, w, cfg.eval_per_class, stream.child("gate"));
  out.report.train_accuracy = r.train_accuracy;
  out.report.heldout_accuracy = r.heldout_accuracy;
  out.report.pair_match_rate = r.pair_match_rate;
  if (r.train_accuracy < cfg.gate_train_accuracy)
    throw GateFailure("teacher-train-accuracy", "zero-shot accuracy " + std::to_string(r.train_accuracy) +
                                                    " on teacher-train domains, need " +
                                                    std::to_string(cfg.gate_train_accuracy));
  if (r.heldout_accuracy < cfg.gate_heldout_accuracy)
    throw GateFailure("teacher-heldout-accuracy", "zero-shot accuracy " + std::to_string(r.heldout_accuracy) +
                                                      " on held-out domains, need " +
                                                      std::to_string(cfg.gate_heldout_accuracy));
  return out;
}

void save_teacher(const std::filesystem::path& path, const TeacherModel& m, const TeacherReport* report) {
  json h;
  h["kind"] = "teacher";
  h["image_side"] = m.dims.image_side;
  h["image_hidden"] = m.dims.image_hidden;
  h["embed_dim"] = m.dims.embed_dim;
  h["token_dim"] = m.dims.token_dim;
  h["text_hidden"] = m.dims.text_hidden;
  h["alphabet"] = m.tokenizer.alphabet();
  h["alphabet_hash"] = m.tokenizer.alphabet_hash();
  h["logit_scale"] = m.logit_scale();
  if (report)
    h["report"] = {{"first_epoch_loss", report->first_epoch_loss},
                   {"final_epoch_loss", report->final_epoch_loss},
                   {"train_accuracy", report->train_accuracy},
                   {"heldout_accuracy", report->heldout_accuracy},
                   {"pair_match_rate", report->pair_match_rate}};
  numerics::Checkpoint ck;
  ck.header = h.dump();
  ck.tensors.emplace_back("codebook", m.codebook);
  ck.tensors.emplace_back("positions", m.positions);
  m.text.export_to(ck.tensors, "text");
  m.image.export_to(ck.tensors, "image");
  ck.tensors.emplace_back("log_scale", Tensor::scalar(m.log_scale));
  numerics::save_checkpoint(path, ck);
}

TeacherModel load_teacher(const std::filesystem::path& path) {
  const auto ck = numerics::load_checkpoint(path);
  json h;
  try {
    h = json::parse(ck.header);
  } catch (const json::exception& e) {
    throw ValidationError("teacher checkpoint header: " + std::string(e.what()));
  }
  if (h.value("kind", "") != "teacher") throw ValidationError(path.string() + " is not a teacher checkpoint");
  TeacherModel m;
  if (h.at("alphabet_hash").get<std::string>() != m.tokenizer.alphabet_hash())
    throw ValidationError("teacher checkpoint was trained with a different alphabet");
  m.dims.image_side = h.at("image_side").get<std::size_t>();
  m.dims.image_hidden = h.at("image_hidden").get<std::vector<std::size_t>>();
  m.dims.embed_dim = h.at("embed_dim").get<std::size_t>();
  m.dims.token_dim = h.at("token_dim").get<std::size_t>();
  m.dims.text_hidden = h.at("text_hidden").get<std::size_t>();
  m.codebook = ck.get("codebook");
  m.positions = ck.get("positions");
  m.text = numerics::Mlp::import_from(ck, "text", 2, numerics::Activation::Tanh, numerics::Activation::Identity);
  m.image = numerics::Mlp::import_from(ck, "image", m.dims.image_hidden.size() + 1, numerics::Activation::Tanh,
                                       numerics::Activation::Identity);
  m.log_scale = ck.get("log_scale")[0];
  return m;
}

}  // namespace promptforge::teacher
