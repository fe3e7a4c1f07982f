// JSON shapes of the report service API. These mirror the stored report
// artifact exactly; the shared fixture files under test/fixtures/ are the
// contract check between this client and the service.

export interface ScatterRow {
  group: string
  size: number
  raw: number
  normalized: number
}

export interface RankingRow extends ScatterRow {
  rank: number
}

export interface MisdiagnosisEntry {
  code: string
  description: string
  pred_freq: number
  true_freq: number
  score: number
}

export interface Inspection {
  group: string
  freq_mode: string
  entries: MisdiagnosisEntry[]
  top_over: MisdiagnosisEntry[]
  top_under: MisdiagnosisEntry[]
}

export interface Driver {
  code: string
  frequency: number
  direction: 'present' | 'absent'
}

export interface Explanation {
  group: string
  code: string
  direction: 'over' | 'under'
  n_explained: number
  n_degenerate: number
  n_low_fidelity: number
  mean_fidelity: number
  drivers: Driver[]
}

export interface RecallRow {
  k: number
  declared: number | null
  observed: number
}

export interface ReportSummary {
  id: string
  created: string | null
  metric: string
  n_groups: number
  n_patients: number | null
}

export interface AuditReport {
  id: string
  metadata: {
    version: number
    created: string
    n_patients: number
    n_instances: number
    n_groups_total: number
    blackbox: string
    schema: Record<string, string[]>
    config: Record<string, unknown>
    bias: Record<string, unknown> | null
    paths: Record<string, string>
    [key: string]: unknown
  }
  recalls: RecallRow[]
  scatter: ScatterRow[]
  ranking: RankingRow[]
  excluded: { group: string; size: number }[]
  inspections: Record<string, Inspection>
  explanations: Record<string, Explanation>
}

/** Parse a condition-set text like "gender=Female,insurance=Other" ("*" is
 * the all-wildcard group). Attributes absent from the text are wildcards. */
export function conditionsOf(group: string): Map<string, string> {
  const out = new Map<string, string>()
  if (group === '*') return out
  for (const part of group.split(',')) {
    const eq = part.indexOf('=')
    out.set(part.slice(0, eq), part.slice(eq + 1))
  }
  return out
}

export function explanationKey(group: string, code: string, direction: string): string {
  return `${group}|${code}|${direction}`
}
