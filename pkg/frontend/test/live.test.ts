// Round-trip against the real service: `fairlens serve` on the committed
// fixture store. The server writes on-demand results back into its store, so
// it runs on a temp copy and the committed fixtures stay pristine.

import { ChildProcess, spawn } from 'node:child_process'
import { copyFileSync, mkdtempSync, readdirSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'
import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { ApiClient } from '../src/api.js'
import { renderDrilldown, renderDrivers } from '../src/drilldown.js'
import { FIXTURES, loadMeta, loadReport } from './helpers.js'

const PORT = 8700 + (process.pid % 800)
const meta = loadMeta()
const report = loadReport()
const client = new ApiClient(`http://127.0.0.1:${PORT}`)

let server: ChildProcess
let serverLog = ''

beforeAll(async () => {
  const store = mkdtempSync(join(tmpdir(), 'fairlens-store-'))
  for (const name of readdirSync(join(FIXTURES, 'store'))) {
    copyFileSync(join(FIXTURES, 'store', name), join(store, name))
  }
  server = spawn('python3', [
    '-m', 'fairlens', 'serve',
    '--store', store,
    '--data', join(FIXTURES, 'bundle'),
    '--host', '127.0.0.1',
    '--port', String(PORT),
  ])
  server.stdout!.on('data', chunk => { serverLog += chunk })
  server.stderr!.on('data', chunk => { serverLog += chunk })
  for (let attempt = 0; ; attempt++) {
    if (server.exitCode !== null) {
      throw new Error(`serve exited early:\n${serverLog}`)
    }
    try {
      const probe = await fetch(`http://127.0.0.1:${PORT}/reports`)
      if (probe.ok) break
    } catch {
      // not listening yet
    }
    if (attempt >= 150) throw new Error(`serve never came up:\n${serverLog}`)
    await new Promise(resolve => setTimeout(resolve, 200))
  }
}, 60000)

afterAll(() => {
  server?.kill('SIGTERM')
})

describe('live service', () => {
  it('lists the fixture report with all 432 groups', async () => {
    const summaries = await client.listReports()
    const summary = summaries.find(s => s.id === meta.report_id)
    expect(summary).toBeDefined()
    expect(summary!.n_groups).toBe(432)
  })

  it('serves the scatter rows exactly as stored', async () => {
    const scatter = await client.scatter(meta.report_id)
    expect(scatter).toHaveLength(432)
    expect(scatter).toEqual(report.scatter)
  })

  it('Explain action round-trips and returns the cached drivers', async () => {
    const { group, code, direction } = meta.explained
    const row = report.ranking.find(r => r.group === group)!
    const inspection = report.inspections[group]

    document.body.innerHTML = '<div id="pane"></div><div id="chart"></div>'
    const pane = document.getElementById('pane')!
    let roundTrip: Promise<unknown> = Promise.resolve()
    renderDrilldown(pane, row, inspection, {
      onExplain: (c, d) => {
        roundTrip = client.explain(meta.report_id, group, c, d)
      },
    })
    pane
      .querySelector<HTMLButtonElement>(
        `button[data-code="${code}"][data-direction="${direction}"]`,
      )!
      .click()
    const explanation = await roundTrip

    const cached = report.explanations[meta.explanation_key]
    expect(explanation).toEqual(cached)

    const chart = document.getElementById('chart')!
    renderDrivers(chart, { kind: 'done', explanation: cached })
    const labels = [...chart.querySelectorAll('.driver-label')].map(
      el => el.textContent,
    )
    expect(labels).toEqual(
      cached.drivers.map(d => `${d.code} ${String(d.frequency)}`),
    )
  })

  it('computes an uncached inspection on demand', async () => {
    const uncached = report.ranking.find(
      r => !(r.group in report.inspections),
    )!
    const inspection = await client.inspection(meta.report_id, uncached.group)
    expect(inspection.group).toBe(uncached.group)
    expect(inspection.top_over.length).toBeGreaterThan(0)
  }, 60000)

  it('unknown groups surface the service 404 message', async () => {
    await expect(
      client.inspection(meta.report_id, 'gender=Nobody'),
    ).rejects.toThrowError(/no group/)
  })
})
