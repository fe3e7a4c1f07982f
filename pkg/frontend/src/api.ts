// Thin fetch client over the report service. The UI never recomputes scores;
// everything rendered comes back from these calls.

import {
  AuditReport,
  Explanation,
  Inspection,
  RankingRow,
  ReportSummary,
  ScatterRow,
  explanationKey,
} from './types.js'

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message)
    this.name = 'ApiError'
  }
}

export class ApiClient {
  // Concurrent in-flight explain requests coalesce per (group, code,
  // direction); the promise is dropped once settled so a retry re-posts.
  private inflight = new Map<string, Promise<Explanation>>()

  constructor(readonly base: string = '') {}

  listReports(): Promise<ReportSummary[]> {
    return this.request('GET', '/reports')
  }

  report(id: string): Promise<AuditReport> {
    return this.request('GET', `/reports/${encodeURIComponent(id)}`)
  }

  scatter(id: string): Promise<ScatterRow[]> {
    return this.request('GET', `/reports/${encodeURIComponent(id)}/scatter`)
  }

  groups(id: string): Promise<RankingRow[]> {
    return this.request('GET', `/reports/${encodeURIComponent(id)}/groups`)
  }

  inspection(id: string, group: string): Promise<Inspection> {
    const path =
      `/reports/${encodeURIComponent(id)}/groups/${encodeURIComponent(group)}/inspection`
    return this.request('GET', path)
  }

  explain(
    id: string, group: string, code: string, direction: string,
  ): Promise<Explanation> {
    const key = `${id}|${explanationKey(group, code, direction)}`
    const pending = this.inflight.get(key)
    if (pending) return pending
    const request = this.request<Explanation>(
      'POST',
      `/reports/${encodeURIComponent(id)}/explain`,
      { group, code, direction },
    ).finally(() => this.inflight.delete(key))
    this.inflight.set(key, request)
    return request
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method }
    if (body !== undefined) {
      init.headers = { 'content-type': 'application/json' }
      init.body = JSON.stringify(body)
    }
    const response = await fetch(`${this.base}${path}`, init)
    if (!response.ok) {
      // Upstream errors arrive as {"error": "..."}; surface the text verbatim.
      let message = `${response.status} ${response.statusText}`
      try {
        const payload = await response.json()
        if (payload && typeof payload.error === 'string') message = payload.error
      } catch {
        // non-JSON error body: keep the status line
      }
      throw new ApiError(message, response.status)
    }
    return response.json() as Promise<T>
  }
}
