// Single-page audit explorer over the report service API. State lives here;
// rendering is delegated to the scatter and drill-down modules.

import { ApiClient, ApiError } from './api.js'
import { DriversState, renderDrilldown, renderDrivers } from './drilldown.js'
import { renderScatter } from './scatter.js'
import { AuditReport, Inspection, explanationKey } from './types.js'

interface AppState {
  report: AuditReport
  colorBy: string
  minSize: number
  selected: string | null
  drivers: DriversState
}

export async function initApp(root: HTMLElement, client: ApiClient): Promise<void> {
  root.innerHTML = `
    <header>
      <h1>FairLens audit explorer</h1>
      <label>report <select id="report-picker"></select></label>
      <label>color by <select id="color-by"></select></label>
      <label>min size <input id="min-size" type="number" min="1" value="1"></label>
    </header>
    <main>
      <section id="scatter"></section>
      <section id="drilldown"></section>
      <section id="drivers"></section>
    </main>`

  const summaries = await client.listReports()
  const scatterHost = root.querySelector<HTMLElement>('#scatter')!
  if (summaries.length === 0) {
    scatterHost.innerHTML = '<div class="empty-state">No stored reports.</div>'
    return
  }

  const picker = root.querySelector<HTMLSelectElement>('#report-picker')!
  for (const summary of summaries) {
    const option = document.createElement('option')
    option.value = summary.id
    option.textContent = `${summary.id} (${summary.metric}, ${summary.n_groups} groups)`
    picker.append(option)
  }

  const wanted = new URLSearchParams(window.location.search).get('report')
  const first = summaries.some(s => s.id === wanted) ? wanted! : summaries[0].id
  picker.value = first
  picker.addEventListener('change', () => void load(picker.value))
  await load(first)

  async function load(reportId: string): Promise<void> {
    const report = await client.report(reportId)
    const state: AppState = {
      report,
      colorBy: Object.keys(report.metadata.schema)[0],
      minSize: 1,
      selected: null,
      drivers: { kind: 'idle' },
    }
    const flagged = new Set(
      report.ranking.filter(row => row.rank <= 4).map(row => row.group),
    )
    const drilldownHost = root.querySelector<HTMLElement>('#drilldown')!
    const driversHost = root.querySelector<HTMLElement>('#drivers')!

    const colorBy = root.querySelector<HTMLSelectElement>('#color-by')!
    colorBy.replaceChildren()
    for (const attribute of Object.keys(report.metadata.schema)) {
      const option = document.createElement('option')
      option.value = attribute
      option.textContent = attribute
      colorBy.append(option)
    }
    colorBy.value = state.colorBy
    colorBy.addEventListener('change', () => {
      state.colorBy = colorBy.value
      drawScatter()
    })
    const minSize = root.querySelector<HTMLInputElement>('#min-size')!
    minSize.addEventListener('change', () => {
      state.minSize = Math.max(1, Number(minSize.value) || 1)
      drawScatter()
    })

    function drawScatter(): void {
      renderScatter(scatterHost, state.report.scatter, {
        schema: state.report.metadata.schema,
        colorBy: state.colorBy,
        minSize: state.minSize,
        selected: state.selected,
        flagged,
        onSelect: group => void select(group),
      })
    }

    async function select(group: string): Promise<void> {
      const row = state.report.ranking.find(r => r.group === group)
      if (!row) return // selection must exist in the loaded report
      state.selected = group
      state.drivers = { kind: 'idle' }
      renderDrivers(driversHost, state.drivers)
      drawScatter()

      const handlers = {
        onExplain: (code: string, direction: 'over' | 'under') =>
          void explain(group, code, direction),
      }
      let inspection: Inspection | undefined = state.report.inspections[group]
      if (inspection === undefined) {
        renderDrilldown(drilldownHost, row, null, handlers)
        inspection = await client.inspection(report.id, group)
        state.report.inspections[group] = inspection
      }
      renderDrilldown(drilldownHost, row, inspection, handlers)
    }

    async function explain(
      group: string, code: string, direction: 'over' | 'under',
    ): Promise<void> {
      const cached = state.report.explanations[explanationKey(group, code, direction)]
      if (cached) {
        state.drivers = { kind: 'done', explanation: cached }
        renderDrivers(driversHost, state.drivers)
        return
      }
      state.drivers = { kind: 'pending', code, direction }
      renderDrivers(driversHost, state.drivers)
      try {
        const explanation = await client.explain(report.id, group, code, direction)
        state.report.explanations[explanationKey(group, code, direction)] = explanation
        state.drivers = { kind: 'done', explanation }
      } catch (err) {
        const message = err instanceof ApiError ? err.message : String(err)
        state.drivers = {
          kind: 'error',
          message,
          retry: () => void explain(group, code, direction),
        }
      }
      renderDrivers(driversHost, state.drivers)
    }

    drawScatter()
  }
}
