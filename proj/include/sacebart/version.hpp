#pragma once

namespace sacebart {

inline constexpr const char* kVersion = "0.1.0";

// Stratum membership is parameterized by two probit mean functions m_Z and
// m_W.  The convention used everywhere in this codebase:
//   pi_00 = Phi(m_Z)
//   pi_10 = (1 - Phi(m_Z)) * Phi(m_W)
//   pi_11 = (1 - Phi(m_Z)) * (1 - Phi(m_W))
// with latents Z ~ N(m_Z, 1), Z >= 0 iff S = 00, and, conditional on
// S in {10, 11}, W ~ N(m_W, 1), W >= 0 iff S = 10.
inline constexpr const char* kStratumConventionNote =
    "pi00=Phi(mZ); pi10=(1-Phi(mZ))*Phi(mW); pi11=(1-Phi(mZ))*(1-Phi(mW)); "
    "Z>=0 iff S=00; W>=0 iff S=10 given S in {10,11}";

}  // namespace sacebart
