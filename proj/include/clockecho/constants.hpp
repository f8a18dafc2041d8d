#pragma once

// CODATA 2018 values, SI units.
namespace clockecho::constants {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double planck = 6.62607015e-34;          // J s
inline constexpr double boltzmann = 1.380649e-23;         // J / K
inline constexpr double mu0 = 1.25663706212e-6;           // T m / A
inline constexpr double bohr_magneton = 9.2740100783e-24; // J / T
inline constexpr double proton_moment = 1.41060679736e-26;// J / T
inline constexpr double angstrom = 1e-10;                 // m

}  // namespace clockecho::constants
