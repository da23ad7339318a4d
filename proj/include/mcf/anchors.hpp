#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mcf {

/// Identity name -> the formula it checks. Every report row carries the formula
/// so a failing row can be matched to the statement being tested.
inline const std::vector<std::pair<std::string, std::string>>& anchor_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"dX", "d/dt X^a_i = nabla_i H^a"},
      {"dg", "d/dt g_ij = -2 sum_a H^a h^a_ij"},
      {"dGamma",
       "d/dt Gamma^k_ij = -g^kl [nabla_i(sum_a H^a h^a_jl) + nabla_j(sum_a H^a h^a_il) - nabla_l(sum_a H^a h^a_ij)]"},
      {"dh", "d/dt h^a_ij = nabla_i nabla_j H^a - (d/dt Gamma^k_ij) X^a_k"},
      {"simons",
       "nabla_i nabla_j H^a = Delta h^a_ij - g^pq (nabla_i R_jp + nabla_j R_ip - nabla_p R_ij) X^a_q"
       " + 2 g^kp g^lq R_ikjl h^a_pq - g^pq R_ip h^a_jq - g^pq R_jp h^a_iq"},
      {"gauss", "R_ijkl = sum_a (h^a_ik h^a_jl - h^a_il h^a_jk), R_ij = g^kl R_ikjl"},
      {"trace", "sum_a |nabla X^a|^2_g = g^ij g_ij = m"},
      {"bernstein", "sup_t |nabla^k h|_g bounded for every k"},
      {"equivalence", "gamma^-1 g <= g~ <= gamma g"},
      {"dd", "d/dt d_ij = -2 sum_a (g^kl h^a_kl h^a_ij - g~^kl h~^a_kl h~^a_ij)"},
      {"dw", "d/dt w^a_i = nabla_i H^a - nabla~_i H~^a"},
      {"N_integral", "|N(t) - N(T)|_g <= int_t^T |d/ds N|_g ds"},
      {"inequality_1", "|(d/dt - Delta)Y|^2_g <= C (|Y|^2_g + |nabla Y|^2_g + |Z|^2_g)"},
      {"inequality_2", "|d/dt Z|^2_g <= C (|Y|^2_g + |nabla Y|^2_g + |Z|^2_g)"},
      {"gronwall", "d/dt (||Y||^2 + ||Z||^2) <= C* (||Y||^2 + ||nabla Y||^2 + ||Z||^2)"},
      {"symmetry", "Q X(sigma^-1(x), t) + b = X(x, t) for all t if it holds at one time"},
  };
  return table;
}

inline std::string anchor_for(std::string_view identity) {
  for (const auto& [name, formula] : anchor_table())
    if (name == identity) return formula;
  return {};
}

}  // namespace mcf
