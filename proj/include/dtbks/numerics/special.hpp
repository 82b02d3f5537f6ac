/*
 * Copyright 2026 The dtbks Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

namespace dtbks {

// ln Γ(x) for finite x > 0. Throws DomainError otherwise.
double lgamma(double x);

// ψ(x) = d/dx ln Γ(x) for finite x > 0. Throws DomainError otherwise.
double digamma(double x);

// ln(1 + e^x) without overflow, and its inverse on (0, inf).
double softplus(double x);
double softplus_inverse(double y);

// Logistic sigmoid, the derivative of softplus.
double sigmoid(double x);

}  // namespace dtbks
