import { beforeEach, describe, expect, it, vi } from 'vitest'

import { renderDrilldown, renderDrivers } from '../src/drilldown.js'
import { Explanation, Inspection } from '../src/types.js'
import { loadMeta, loadReport } from './helpers.js'

const report = loadReport()
const meta = loadMeta()
const rankOne = report.ranking[0]
const inspection = report.inspections[rankOne.group]

describe('drilldown', () => {
  let host: HTMLElement

  beforeEach(() => {
    document.body.innerHTML = '<div id="host"></div>'
    host = document.getElementById('host')!
  })

  it('shows the fixture top-3 over and under codes verbatim', () => {
    renderDrilldown(host, rankOne, inspection, { onExplain: () => {} })
    for (const [cls, entries] of [
      ['over', inspection.top_over],
      ['under', inspection.top_under],
    ] as const) {
      const rows = [...host.querySelectorAll(`.miscodes.${cls} tr`)]
      expect(rows).toHaveLength(entries.length)
      rows.forEach((row, i) => {
        expect(row.querySelector('.code')!.textContent).toBe(entries[i].code)
        expect(row.querySelector('.score')!.textContent).toBe(
          String(entries[i].score),
        )
      })
    }
  })

  it('header numbers equal the ranking row fields exactly', () => {
    renderDrilldown(host, rankOne, inspection, { onExplain: () => {} })
    const facts = host.querySelector('.facts')!.textContent!
    expect(facts).toContain(`rank ${String(rankOne.rank)}`)
    expect(facts).toContain(`size ${String(rankOne.size)}`)
    expect(facts).toContain(`disparity ${String(rankOne.normalized)}`)
    expect(facts).toContain(`raw ${String(rankOne.raw)}`)
  })

  it('explain buttons carry the code and direction', () => {
    const onExplain = vi.fn()
    renderDrilldown(host, rankOne, inspection, { onExplain })
    const button = host.querySelector<HTMLButtonElement>(
      `.miscodes.over button[data-code="${meta.explained.code}"]`,
    )!
    button.click()
    expect(onExplain).toHaveBeenCalledWith(meta.explained.code, 'over')
  })

  it('all-zero scores collapse to a no-systematic-error message', () => {
    const zero: Inspection = {
      ...inspection,
      top_over: inspection.top_over.map(e => ({ ...e, score: 0 })),
      top_under: inspection.top_under.map(e => ({ ...e, score: -0 })),
    }
    renderDrilldown(host, rankOne, zero, { onExplain: () => {} })
    expect(host.querySelector('.no-error')!.textContent).toContain(
      'No systematic error',
    )
    expect(host.querySelector('.miscodes')).toBeNull()
  })

  it('missing inspection renders a progress state', () => {
    renderDrilldown(host, rankOne, null, { onExplain: () => {} })
    expect(host.querySelector('.progress')).not.toBeNull()
  })
})

describe('drivers pane', () => {
  let host: HTMLElement
  const explanation: Explanation = report.explanations[meta.explanation_key]

  beforeEach(() => {
    document.body.innerHTML = '<div id="host"></div>'
    host = document.getElementById('host')!
  })

  it('renders fixture drivers as signed bars with exact frequencies', () => {
    renderDrivers(host, { kind: 'done', explanation })
    const rows = [...host.querySelectorAll('.driver-row')]
    expect(rows).toHaveLength(explanation.drivers.length)
    rows.forEach((row, i) => {
      const driver = explanation.drivers[i]
      expect(row.querySelector('.driver-label')!.textContent).toBe(
        `${driver.code} ${String(driver.frequency)}`,
      )
      const bar = row.querySelector<HTMLElement>('.bar')!
      expect(bar.dataset.direction).toBe(driver.direction)
      expect(bar.classList.contains('side-right')).toBe(
        driver.direction === 'present',
      )
    })
    expect(host.textContent).toContain(String(explanation.mean_fidelity))
  })

  it('absence drivers point left', () => {
    const absent: Explanation = {
      ...explanation,
      drivers: [{ code: 'G09', frequency: 0.25, direction: 'absent' }],
    }
    renderDrivers(host, { kind: 'done', explanation: absent })
    const bar = host.querySelector<HTMLElement>('.bar')!
    expect(bar.classList.contains('side-left')).toBe(true)
    expect(bar.style.width).toBe('12.5%')
  })

  it('no drivers yields an explanatory message, not an empty chart', () => {
    renderDrivers(host, {
      kind: 'done',
      explanation: { ...explanation, drivers: [] },
    })
    expect(host.querySelector('.drivers')).toBeNull()
    expect(host.querySelector('.no-error')).not.toBeNull()
  })

  it('pending state shows progress until the POST resolves', () => {
    renderDrivers(host, { kind: 'pending', code: 'G11', direction: 'over' })
    expect(host.querySelector('.progress')!.textContent).toContain('G11')
  })

  it('errors surface the upstream message verbatim with a retry action', () => {
    const retry = vi.fn()
    const message = 'black box unreachable: connection refused (try later)'
    renderDrivers(host, { kind: 'error', message, retry })
    expect(host.querySelector('.error')!.textContent).toBe(message)
    host.querySelector<HTMLButtonElement>('button.retry')!.click()
    expect(retry).toHaveBeenCalledTimes(1)
  })
})
