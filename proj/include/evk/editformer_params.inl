#pragma once

// Parameter traversal for ModelWeights; included from editformer.hpp.

#include <span>
#include <string>
#include <type_traits>

namespace evk::editformer::detail {

template <class W, class Fn>
void visit_attention(W& a, ParamGroup g, const std::string& prefix, Fn& fn) {
  fn(g, prefix + ".wq", std::span(a.wq.v));
  fn(g, prefix + ".wk", std::span(a.wk.v));
  fn(g, prefix + ".wv", std::span(a.wv.v));
  fn(g, prefix + ".wo", std::span(a.wo.v));
}

template <class W, class Fn>
void visit_norm(W& n, ParamGroup g, const std::string& prefix, Fn& fn) {
  fn(g, prefix + ".gamma", std::span(n.gamma));
  fn(g, prefix + ".beta", std::span(n.beta));
}

template <class M, class Fn>
void visit_model(M& w, Fn& fn) {
  const auto B = ParamGroup::Backbone;
  fn(B, std::string("time_proj"), std::span(w.time_proj.v));
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layer" + std::to_string(i);
    visit_norm(l.norm1, B, p + ".norm1", fn);
    visit_attention(l.self_attn, B, p + ".self_attn", fn);
    visit_norm(l.norm2, B, p + ".norm2", fn);
    visit_attention(l.image_attn, B, p + ".image_attn", fn);
    visit_norm(l.norm3, B, p + ".norm3", fn);
    fn(B, p + ".ffn.w1", std::span(l.ffn.w1.v));
    fn(B, p + ".ffn.b1", std::span(l.ffn.b1));
    fn(B, p + ".ffn.w2", std::span(l.ffn.w2.v));
    fn(B, p + ".ffn.b2", std::span(l.ffn.b2));
    visit_attention(l.guide1, ParamGroup::Guide1, p + ".guide1", fn);
    visit_attention(l.guide2, ParamGroup::Guide2, p + ".guide2", fn);
  }
  visit_norm(w.out_norm, B, "out_norm", fn);
  fn(B, std::string("out_proj"), std::span(w.out_proj.v));
  const auto G = ParamGroup::Gate;
  fn(G, std::string("gate.w1"), std::span(w.gate.w1.v));
  fn(G, std::string("gate.b1"), std::span(w.gate.b1));
  fn(G, std::string("gate.w2"), std::span(w.gate.w2.v));
  fn(G, std::string("gate.b2"), std::span(w.gate.b2));
  fn(G, std::string("gate.w3"), std::span(w.gate.w3.v));
  fn(G, std::string("gate.b3"), std::span(w.gate.b3));
}

}  // namespace evk::editformer::detail

namespace evk::editformer {

template <class T, class Fn>
void for_each_param(ModelWeights<T>& w, Fn&& fn) {
  detail::visit_model(w, fn);
}

template <class T, class Fn>
void for_each_param(const ModelWeights<T>& w, Fn&& fn) {
  detail::visit_model(w, fn);
}

}  // namespace evk::editformer
