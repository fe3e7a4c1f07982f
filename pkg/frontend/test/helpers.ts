import { readFileSync } from 'node:fs'
import { dirname, join } from 'node:path'
import { fileURLToPath } from 'node:url'

import { AuditReport } from '../src/types.js'

export const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), 'fixtures')

export interface FixtureMeta {
  report_id: string
  explained: { group: string; code: string; direction: 'over' | 'under' }
  explanation_key: string
}

export function loadMeta(): FixtureMeta {
  return JSON.parse(readFileSync(join(FIXTURES, 'meta.json'), 'utf-8'))
}

export function loadReport(): AuditReport {
  const meta = loadMeta()
  const path = join(FIXTURES, 'store', `${meta.report_id}.json`)
  return JSON.parse(readFileSync(path, 'utf-8'))
}
