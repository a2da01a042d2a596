#include "promptforge/error.hpp"
#include "promptforge/genlab.hpp"
#include "promptforge/numerics/hash.hpp"

#include <json.hpp>

#include <cmath>

namespace promptforge::genlab {

using nlohmann::json;
using numerics::Activation;

namespace {

world::Dataset gather(const world::WorldSpec& w, std::size_t per_class, const RngStream& stream) {
  world::Dataset out;
  for (const auto* d : w.domains_with_role(world::DomainRole::GeneratorTrain)) {
    auto part = world::build_domain_dataset(*d, w.categories, per_class, stream, w.image_side);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (out.empty()) throw ValidationError("world has no generator-train domain");
  return out;
}

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& mid, std::size_t out) {
  std::vector<std::size_t> s{in};
  s.insert(s.end(), mid.begin(), mid.end());
  s.push_back(out);
  return s;
}

}  // namespace

Var decode(Tape& tape, const GeneratorModel& g, const numerics::MlpVars& vars, Var z) {
  if (tape.value(z).cols() != g.dims.latent_dim)
    throw ContractViolation("decode: latent width " + std::to_string(tape.value(z).cols()) + ", expected " +
                            std::to_string(g.dims.latent_dim));
  return numerics::forward(tape, g.decoder, vars, z);
}

Tensor GeneratorModel::decode(const Tensor& z) const {
  if (!z.all_finite()) throw ValidationError("decode: non-finite latent");
  Tape tape;
  const auto vars = numerics::bind(tape, decoder, false);
  return tape.value(genlab::decode(tape, *this, vars, tape.constant_ref(z)));
}

std::string GeneratorModel::digest() const {
  std::string bytes;
  for (const auto& l : decoder.layers)
    for (const auto* t : {&l.weight, &l.bias})
      bytes.append(reinterpret_cast<const char*>(t->values().data()), t->size() * sizeof(double));
  return numerics::sha256_hex(bytes);
}

PretrainedGenerator pretrain_generator(const world::WorldSpec& w, const GeneratorConfig& cfg,
                                       const RngStream& stream) {
  w.validate();
  if (cfg.dims.image_side != w.image_side) throw ValidationError("generator image side differs from the world's");
  if (cfg.batch_size < 1 || cfg.dims.latent_dim < 1) throw ValidationError("generator batch and latent must be >= 1");
  const std::size_t D = cfg.dims.image_dim();
  const std::size_t L = cfg.dims.latent_dim;

  auto init = stream.child("init");
  std::vector<std::size_t> enc_hidden(cfg.dims.hidden.rbegin(), cfg.dims.hidden.rend());
  auto encoder = numerics::Mlp::create(chain(D, enc_hidden, 2 * L), Activation::Tanh, Activation::Identity, init);
  PretrainedGenerator out;
  out.model.dims = cfg.dims;
  out.model.decoder = numerics::Mlp::create(chain(L, cfg.dims.hidden, D), Activation::Tanh, Activation::Sigmoid, init);
  auto& dec = out.model.decoder;

  const auto data = gather(w, cfg.train_per_class, stream.child("train"));
  const Tensor X = world::stack_pixels(data);
  std::vector<Tensor*> params = encoder.parameters();
  for (auto* p : dec.parameters()) params.push_back(p);
  numerics::AdamGroup opt(params, {.lr = cfg.lr});

  RngStream order = stream.child("order");
  RngStream noise = stream.child("noise");
  const std::size_t N = data.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm = order.permutation(N);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < N; start += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, N - start);
      Tensor xb = Tensor::matrix(B, D);
      for (std::size_t i = 0; i < B; ++i) std::copy_n(X.row_span(perm[start + i]).begin(), D, xb.row_span(i).begin());
      Tape tape;
      auto ev = numerics::bind(tape, encoder, true);
      auto dv = numerics::bind(tape, dec, true);
      Var x = tape.constant(std::move(xb));
      Var h = numerics::forward(tape, encoder, ev, x);
      Var mu = tape.slice_cols(h, 0, L);
      Var logvar = tape.slice_cols(h, L, L);
      Var eps = tape.constant(numerics::sample_gaussian(noise, {B, L}));
      Var z = tape.add(mu, tape.mul(tape.exp(tape.scale(logvar, 0.5)), eps));
      Var rec = tape.sum(tape.square(tape.sub(numerics::forward(tape, dec, dv, z), x)));
      // KL(q || N(0, I)) = -0.5 sum(1 + logvar - mu^2 - exp(logvar))
      Var kl = tape.scale(tape.sum(tape.sub(tape.add_scalar(logvar, 1.0), tape.add(tape.square(mu), tape.exp(logvar)))),
                          -0.5);
      Var loss = tape.scale(tape.add(rec, tape.scale(kl, cfg.kl_weight)), 1.0 / static_cast<double>(B));
      auto g = tape.backward(loss);
      auto vars = ev.all();
      for (auto v : dv.all()) vars.push_back(v);
      opt.step(numerics::collect(g, vars));
      total += tape.scalar(loss);
      ++batches;
    }
    total /= static_cast<double>(std::max<std::size_t>(batches, 1));
    if (epoch == 0) out.report.first_epoch_loss = total;
    out.report.final_epoch_loss = total;
  }

  // Validation reconstructs from the posterior mean.
  const auto val = gather(w, cfg.val_per_class, stream.child("validation"));
  const Tensor V = world::stack_pixels(val);
  Tape tape;
  auto ev = numerics::bind(tape, encoder, false);
  Var mu = tape.slice_cols(numerics::forward(tape, encoder, ev, tape.constant_ref(V)), 0, L);
  const Tensor recon = out.model.decode(tape.value(mu));
  double se = 0.0;
  for (std::size_t i = 0; i < V.size(); ++i) se += (recon[i] - V[i]) * (recon[i] - V[i]);
  out.report.validation_mse = se / static_cast<double>(V.size());
  if (!(out.report.validation_mse < cfg.gate_mse))
    throw GateFailure("generator-reconstruction", "validation MSE " + std::to_string(out.report.validation_mse) +
                                                      ", need < " + std::to_string(cfg.gate_mse));
  return out;
}

void save_generator(const std::filesystem::path& path, const GeneratorModel& g, const GeneratorReport* report) {
  json h;
  h["kind"] = "generator";
  h["image_side"] = g.dims.image_side;
  h["latent_dim"] = g.dims.latent_dim;
  h["hidden"] = g.dims.hidden;
  if (report)
    h["report"] = {{"first_epoch_loss", report->first_epoch_loss},
                   {"final_epoch_loss", report->final_epoch_loss},
                   {"validation_mse", report->validation_mse}};
  numerics::Checkpoint ck;
  ck.header = h.dump();
  g.decoder.export_to(ck.tensors, "decoder");
  numerics::save_checkpoint(path, ck);
}

GeneratorModel load_generator(const std::filesystem::path& path) {
  const auto ck = numerics::load_checkpoint(path);
  json h;
  try {
    h = json::parse(ck.header);
  } catch (const json::exception& e) {
    throw ValidationError("generator checkpoint header: " + std::string(e.what()));
  }
  if (h.value("kind", "") != "generator") throw ValidationError(path.string() + " is not a generator checkpoint");
  GeneratorModel g;
  g.dims.image_side = h.at("image_side").get<std::size_t>();
  g.dims.latent_dim = h.at("latent_dim").get<std::size_t>();
  g.dims.hidden = h.at("hidden").get<std::vector<std::size_t>>();
  g.decoder = numerics::Mlp::import_from(ck, "decoder", g.dims.hidden.size() + 1, Activation::Tanh, Activation::Sigmoid);
  if (g.decoder.input_dim() != g.dims.latent_dim || g.decoder.output_dim() != g.dims.image_dim())
    throw ValidationError("generator checkpoint shapes disagree with its header");
  return g;
}

}  // namespace promptforge::genlab
